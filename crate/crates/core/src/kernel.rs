//! The learned kernel `K(x, x') = sum_k theta_k I[sigma_k(x) = sigma_k(x')]`,
//! its square-root feature map, Gram matrices and the chi-square
//! comparison diagnostic.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MbklError, Result};
use crate::matrix::Matrix;
use crate::mbkl::StumpBank;
use crate::seed;
use crate::stumps::{evaluate_bank, generate_stumps, BitMatrix, Stump};

/// Default sample limit for materialized Gram matrices.
pub const GRAM_LIMIT: usize = 20_000;
/// Default number of pairs in a correlation report.
pub const PAIR_CAP: usize = 100_000;

fn check_bank(bank: &StumpBank) -> Result<()> {
    if bank.is_empty() {
        return Err(MbklError::InvalidConfig("the kernel needs at least one stump".into()));
    }
    Ok(())
}

/// Equal positive kernel weights, if that is what the bank holds.
fn uniform_theta(bank: &StumpBank) -> Option<f64> {
    let t = *bank.theta.first()?;
    bank.theta.iter().all(|&v| v == t).then_some(t)
}

fn pack(stumps: &[Stump], x: &[f64]) -> Vec<u64> {
    let mut words = vec![0u64; stumps.len().div_ceil(64)];
    for (k, s) in stumps.iter().enumerate() {
        if s.evaluate(x) {
            words[k / 64] |= 1 << (k % 64);
        }
    }
    words
}

/// `sum_k theta_k` minus the weights of the stumps on which the two packed
/// responses disagree; identical inputs give exactly `sum_k theta_k`.
fn packed_kernel(a: &[u64], b: &[u64], theta: &[f64], total: f64, uniform: Option<f64>) -> f64 {
    match uniform {
        Some(t) => {
            let differ: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
            total - t * f64::from(differ)
        }
        None => {
            let mut lost = 0.0;
            for (w, (x, y)) in a.iter().zip(b).enumerate() {
                let mut d = x ^ y;
                while d != 0 {
                    lost += theta[w * 64 + d.trailing_zeros() as usize];
                    d &= d - 1;
                }
            }
            total - lost
        }
    }
}

pub fn mbk_kernel(x: &[f64], x2: &[f64], bank: &StumpBank) -> Result<f64> {
    check_bank(bank)?;
    if x.len() != x2.len() {
        return Err(MbklError::DimensionMismatch {
            expected: x.len(),
            found: x2.len(),
        });
    }
    if let Some(s) = bank.stumps.iter().find(|s| s.feature >= x.len()) {
        return Err(MbklError::DimensionMismatch {
            expected: s.feature + 1,
            found: x.len(),
        });
    }
    let a = pack(&bank.stumps, x);
    let b = pack(&bank.stumps, x2);
    Ok(packed_kernel(&a, &b, &bank.theta, bank.theta_l1(), uniform_theta(bank)))
}

/// `[sqrt(theta_1) sigma_1, sqrt(theta_1) (1 - sigma_1), ...]`.
pub fn sqrt_theta_map(x: &[f64], bank: &StumpBank) -> Result<Vec<f64>> {
    if let Some(s) = bank.stumps.iter().find(|s| s.feature >= x.len()) {
        return Err(MbklError::DimensionMismatch {
            expected: s.feature + 1,
            found: x.len(),
        });
    }
    let mut out = vec![0.0; 2 * bank.len()];
    for (k, (s, &t)) in bank.stumps.iter().zip(&bank.theta).enumerate() {
        let r = t.sqrt();
        if s.evaluate(x) {
            out[2 * k] = r;
        } else {
            out[2 * k + 1] = r;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub source: String,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.values.get(i, i)).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let m = DMatrix::from_row_slice(n, n, self.values.as_slice());
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rows and columns reordered by class label (stable), with the order used.
    pub fn class_sorted(&self, labels: &[usize]) -> Result<(KernelMatrix, Vec<usize>)> {
        if labels.len() != self.n() {
            return Err(MbklError::DimensionMismatch {
                expected: self.n(),
                found: labels.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_key(|&i| labels[i]);
        let n = self.n();
        let mut values = Matrix::zeros(n, n);
        for (r, &i) in order.iter().enumerate() {
            for (c, &j) in order.iter().enumerate() {
                values.set(r, c, self.values.get(i, j));
            }
        }
        Ok((
            KernelMatrix {
                values,
                source: format!("{} (class-sorted)", self.source),
            },
            order,
        ))
    }

    /// Row-major CSV of the values, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.values.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Full MBK Gram matrix of the rows of `data`; fails above `limit` rows.
pub fn gram_matrix(data: &Matrix, bank: &StumpBank, limit: usize) -> Result<KernelMatrix> {
    check_bank(bank)?;
    let n = data.rows();
    if n > limit {
        return Err(MbklError::TooLarge { n, limit });
    }
    let samples = evaluate_bank(&bank.stumps, data)?.transpose();
    let total = bank.theta_l1();
    let uniform = uniform_theta(bank);
    let mut values = Matrix::zeros(n, n);
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| packed_kernel(samples.row(i), samples.row(j), &bank.theta, total, uniform))
                .collect()
        })
        .collect();
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            values.set(i, i + off, v);
            values.set(i + off, i, v);
        }
    }
    Ok(KernelMatrix {
        values,
        source: format!("mbk kernel over {} stumps", bank.len()),
    })
}

/// `1/2 sum_i (h_i - h'_i)^2 / (h_i + h'_i)`, terms with a zero denominator
/// contributing nothing.
pub fn chi2_distance(h: &[f64], h2: &[f64]) -> Result<f64> {
    if h.len() != h2.len() {
        return Err(MbklError::DimensionMismatch {
            expected: h.len(),
            found: h2.len(),
        });
    }
    if let Some(v) = h.iter().chain(h2).find(|v| !(**v >= 0.0)) {
        return Err(MbklError::InvalidConfig(format!("histogram entry {v} is negative")));
    }
    let mut s = 0.0;
    for (&a, &b) in h.iter().zip(h2) {
        let den = a + b;
        if den > 0.0 {
            s += (a - b) * (a - b) / den;
        }
    }
    Ok(0.5 * s)
}

/// Sample correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub chi2: f64,
    /// `1 - K(x_i, x_j) / K`, i.e. the fraction of disagreeing stumps.
    pub mbk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub n_samples: usize,
    pub n_stumps: usize,
    pub total_pairs: usize,
    pub sampled: bool,
    pub pairs: Vec<PairDistance>,
    pub pearson: Option<f64>,
}

impl CorrelationReport {
    pub fn write_scatter_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,chi2,mbkl")?;
        for p in &self.pairs {
            writeln!(out, "{},{},{},{}", p.i, p.j, p.chi2, p.mbk)?;
        }
        Ok(())
    }
}

/// Decodes the `t`-th pair `(i, j)`, `i < j`, of `n` items in row order.
fn pair_at(t: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    let mut start = 0;
    loop {
        let len = n - 1 - i;
        if t < start + len {
            return (i, i + 1 + t - start);
        }
        start += len;
        i += 1;
    }
}

/// Bank of `n_stumps` random stumps over `data` with unit weights.
pub fn uniform_bank(data: &Matrix, n_stumps: usize, seed: u64) -> StumpBank {
    let stumps = generate_stumps(data, n_stumps, seed::derive(seed, seed::Stage::Kernel, &[]));
    StumpBank {
        theta: vec![1.0; stumps.len()],
        stumps,
    }
}

/// Chi-square versus count-normalized MBK distance (theta = 1) over all
/// pairs of rows, or a seeded sample of `pair_cap` of them.
pub fn distance_correlation_report(data: &Matrix, n_stumps: usize, seed: u64, pair_cap: usize) -> Result<CorrelationReport> {
    if n_stumps == 0 {
        return Err(MbklError::InvalidConfig(
            "distance normalization needs at least one stump".into(),
        ));
    }
    let n = data.rows();
    if n < 2 {
        return Err(MbklError::EmptyDataset);
    }
    if let Some(v) = data.as_slice().iter().find(|v| !(**v >= 0.0)) {
        return Err(MbklError::InvalidConfig(format!("histogram entry {v} is negative")));
    }
    let bank = uniform_bank(data, n_stumps, seed);
    let samples: BitMatrix = evaluate_bank(&bank.stumps, data)?.transpose();
    let total_pairs = n * (n - 1) / 2;
    let sampled = total_pairs > pair_cap;
    let chosen: Vec<usize> = if sampled {
        let mut rng = seed::rng(seed::derive(seed, seed::Stage::Kernel, &[1]));
        let mut v = index::sample(&mut rng, total_pairs, pair_cap).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..total_pairs).collect()
    };
    let k = n_stumps as f64;
    let pairs: Vec<PairDistance> = chosen
        .par_iter()
        .map(|&t| {
            let (i, j) = pair_at(t, n);
            let differ: u32 = samples
                .row(i)
                .iter()
                .zip(samples.row(j))
                .map(|(a, b)| (a ^ b).count_ones())
                .sum();
            let chi2 = chi2_distance(data.row(i), data.row(j)).unwrap_or(f64::NAN);
            PairDistance {
                i,
                j,
                chi2,
                mbk: f64::from(differ) / k,
            }
        })
        .collect();
    let xs: Vec<f64> = pairs.iter().map(|p| p.chi2).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.mbk).collect();
    Ok(CorrelationReport {
        n_samples: n,
        n_stumps,
        total_pairs,
        sampled,
        pearson: pearson(&xs, &ys),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(theta: Vec<f64>) -> StumpBank {
        let stumps = (0..theta.len()).map(|k| Stump::new(k % 2, 0.1 * k as f64)).collect();
        StumpBank::new(stumps, theta).unwrap()
    }

    #[test]
    fn self_similarity_is_theta_norm() {
        let b = bank(vec![0.1, 0.2, 0.7, 0.0]);
        let x = [0.35, 0.05];
        assert_eq!(mbk_kernel(&x, &x, &b).unwrap(), b.theta_l1());
        let u = bank(vec![0.1; 5]);
        assert_eq!(mbk_kernel(&x, &x, &u).unwrap(), u.theta_l1());
    }

    #[test]
    fn single_stump_disagreement_is_zero() {
        let b = StumpBank::new(vec![Stump::new(0, 0.5)], vec![1.0]).unwrap();
        assert_eq!(mbk_kernel(&[0.2], &[0.8], &b).unwrap(), 0.0);
        assert!(mbk_kernel(&[0.2], &[0.8], &StumpBank::new(vec![], vec![]).unwrap()).is_err());
    }

    #[test]
    fn sqrt_map_values() {
        let b = StumpBank::new(vec![Stump::new(0, 0.5)], vec![4.0]).unwrap();
        assert_eq!(sqrt_theta_map(&[0.9], &b).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn gram_small_cases() {
        let b = bank(vec![0.5, 1.5, 2.0]);
        let one = Matrix::from_rows(&[[0.3, 0.3]]).unwrap();
        let g = gram_matrix(&one, &b, 10).unwrap();
        assert_eq!(g.values.as_slice(), &[4.0]);
        let dup = Matrix::from_rows(&[[0.3, 0.1], [0.05, 0.9], [0.3, 0.1]]).unwrap();
        let g = gram_matrix(&dup, &b, 10).unwrap();
        assert_eq!(g.values.row(0), g.values.row(2));
        assert!(matches!(gram_matrix(&dup, &b, 2), Err(MbklError::TooLarge { .. })));
        let (sorted, order) = g.class_sorted(&[1, 0, 1]).unwrap();
        assert_eq!(order, vec![1, 0, 2]);
        assert_eq!(sorted.values.get(0, 0), g.values.get(1, 1));
    }

    #[test]
    fn chi2_values() {
        assert_eq!(chi2_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(chi2_distance(&[0.2, 0.0], &[0.2, 0.0]).unwrap(), 0.0);
        assert!(chi2_distance(&[-0.1], &[0.1]).is_err());
    }

    #[test]
    fn pair_decoding_enumerates_upper_triangle() {
        let n = 5;
        let mut expect = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                expect.push((i, j));
            }
        }
        let got: Vec<_> = (0..expect.len()).map(|t| pair_at(t, n)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn correlation_guards() {
        let m = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!(distance_correlation_report(&m, 0, 1, 10).is_err());
        let r = distance_correlation_report(&m, 100, 1, 10).unwrap();
        assert!(r.pairs.iter().all(|p| p.chi2 == 0.0 && p.mbk == 0.0));
        assert_eq!(r.pearson, None);
    }
}
