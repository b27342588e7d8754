//! Random decision stumps `x[i] > t` and their bit-packed evaluations.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MbklError, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Read access to one feature vector, one coordinate at a time.
pub trait FeatureSource {
    fn dim(&self) -> usize;
    fn feature(&self, j: usize) -> f64;
}

impl FeatureSource for [f64] {
    #[inline]
    fn dim(&self) -> usize {
        self.len()
    }

    #[inline]
    fn feature(&self, j: usize) -> f64 {
        self[j]
    }
}

impl FeatureSource for Vec<f64> {
    #[inline]
    fn dim(&self) -> usize {
        self.len()
    }

    #[inline]
    fn feature(&self, j: usize) -> f64 {
        self[j]
    }
}

/// Binary mapping `x[feature] > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
}

impl Stump {
    pub fn new(feature: usize, threshold: f64) -> Self {
        Stump { feature, threshold }
    }

    /// Reads exactly one coordinate of `x`.
    #[inline]
    pub fn evaluate<S: FeatureSource + ?Sized>(&self, x: &S) -> bool {
        x.feature(self.feature) > self.threshold
    }
}

pub fn evaluate_stump(s: &Stump, x: &[f64]) -> bool {
    s.evaluate(x)
}

/// Draws `count` stumps: feature uniform over `[0, d)`, threshold uniform
/// over the closed observed range of that column. Labels are never read.
pub fn generate_stumps(features: &Matrix, count: usize, seed: u64) -> Vec<Stump> {
    let d = features.cols();
    if count == 0 || d == 0 || features.rows() == 0 {
        return Vec::new();
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in features.iter_rows() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut rng = seed::rng(seed);
    (0..count)
        .map(|_| {
            let feature = rng.random_range(0..d);
            let (a, b) = (lo[feature], hi[feature]);
            let threshold = if a < b { rng.random_range(a..=b) } else { a };
            Stump { feature, threshold }
        })
        .collect()
}

/// Dumps `k,feature_index,threshold` rows.
pub fn write_stumps_csv<W: Write>(stumps: &[Stump], mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,feature_index,threshold")?;
    for (k, s) in stumps.iter().enumerate() {
        writeln!(out, "{k},{},{}", s.feature, s.threshold)?;
    }
    Ok(())
}

const WORD: usize = 64;

/// K x N booleans, each stump row packed along samples, 64 per word.
/// Bits past `n_samples` in the last word are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    n_rows: usize,
    n_cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        let words_per_row = n_cols.div_ceil(WORD);
        BitMatrix {
            n_rows,
            n_cols,
            words_per_row,
            words: vec![0; n_rows * words_per_row],
        }
    }

    /// Number of stumps (rows).
    pub fn n_stumps(&self) -> usize {
        self.n_rows
    }

    /// Number of samples (columns).
    pub fn n_samples(&self) -> usize {
        self.n_cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> bool {
        let w = self.words[k * self.words_per_row + j / WORD];
        (w >> (j % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, k: usize, j: usize, value: bool) {
        let w = &mut self.words[k * self.words_per_row + j / WORD];
        let mask = 1u64 << (j % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[u64] {
        &self.words[k * self.words_per_row..(k + 1) * self.words_per_row]
    }

    pub fn count_ones(&self, k: usize) -> usize {
        self.row(k).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Popcount of row `k` restricted to the samples set in `mask`.
    pub fn count_ones_masked(&self, k: usize, mask: &[u64]) -> usize {
        debug_assert_eq!(mask.len(), self.words_per_row);
        self.row(k)
            .iter()
            .zip(mask)
            .map(|(w, m)| (w & m).count_ones() as usize)
            .sum()
    }

    /// Copies the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> BitMatrix {
        let mut words = Vec::with_capacity(rows.len() * self.words_per_row);
        for &k in rows {
            words.extend_from_slice(self.row(k));
        }
        BitMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            words_per_row: self.words_per_row,
            words,
        }
    }

    /// Sample-major copy: row `j` of the result holds the bits of sample `j`.
    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.n_cols, self.n_rows);
        for k in 0..self.n_rows {
            for (wi, &w) in self.row(k).iter().enumerate() {
                let mut bits = w;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    t.set(wi * WORD + b, k, true);
                    bits &= bits - 1;
                }
            }
        }
        t
    }

    /// Packs a mask of the samples for which `pred` holds.
    pub fn mask_from<F: Fn(usize) -> bool>(n_samples: usize, pred: F) -> Vec<u64> {
        let mut mask = vec![0u64; n_samples.div_ceil(WORD)];
        for j in 0..n_samples {
            if pred(j) {
                mask[j / WORD] |= 1u64 << (j % WORD);
            }
        }
        mask
    }
}

/// Evaluates every stump on every row of `data`; rows are processed in parallel.
pub fn evaluate_bank(stumps: &[Stump], data: &Matrix) -> Result<BitMatrix> {
    if let Some(s) = stumps.iter().find(|s| s.feature >= data.cols()) {
        return Err(MbklError::DimensionMismatch {
            expected: s.feature + 1,
            found: data.cols(),
        });
    }
    let n = data.rows();
    let mut bits = BitMatrix::zeros(stumps.len(), n);
    let wpr = bits.words_per_row;
    if wpr == 0 {
        return Ok(bits);
    }
    bits.words
        .par_chunks_mut(wpr)
        .zip(stumps.par_iter())
        .for_each(|(row, s)| {
            for (wi, word) in row.iter_mut().enumerate() {
                let start = wi * WORD;
                let end = (start + WORD).min(n);
                let mut w = 0u64;
                for j in start..end {
                    if data.get(j, s.feature) > s.threshold {
                        w |= 1u64 << (j - start);
                    }
                }
                *word = w;
            }
        });
    Ok(bits)
}
