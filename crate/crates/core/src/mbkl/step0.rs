//! Per-stump sign initialization from class response proportions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MbklError, Result};
use crate::stumps::BitMatrix;

/// Rule mapping the fractions `P = p/t_p` and `N = n/t_n` of positives and
/// negatives with `sigma = 1` to a stump sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step0Mode {
    /// `I[P >= 1/2] - I[N >= 1/2]`: the stump answers 1 for the class in
    /// which most samples respond.
    #[default]
    Majority,
    /// The printed table: `I[N >= 1/2] - I[P >= 1/2]`.
    Verbatim,
    /// `sign(P - N)`, the minimizer of the class-balanced single-stump hinge
    /// loss over `a in {-1, 0, +1}` (0 on exact ties).
    Hinge,
}

impl Step0Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Step0Mode::Majority => "majority",
            Step0Mode::Verbatim => "verbatim",
            Step0Mode::Hinge => "hinge",
        }
    }
}

impl fmt::Display for Step0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step0Mode {
    type Err = MbklError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Step0Mode::Majority),
            "verbatim" | "table-verbatim" => Ok(Step0Mode::Verbatim),
            "hinge" => Ok(Step0Mode::Hinge),
            other => Err(MbklError::InvalidConfig(format!(
                "unknown step-0 mode {other:?} (expected majority, verbatim or hinge)"
            ))),
        }
    }
}

/// Sign of `a` for one stump given `p` of `t_p` positives and `n` of `t_n`
/// negatives responding 1. Proportions exactly 1/2 count as `>= 1/2`.
pub fn step0_sign(p: usize, t_p: usize, n: usize, t_n: usize, mode: Step0Mode) -> i8 {
    debug_assert!(t_p >= 1 && t_n >= 1 && p <= t_p && n <= t_n);
    let pos_half = 2 * p >= t_p;
    let neg_half = 2 * n >= t_n;
    match mode {
        Step0Mode::Majority => i8::from(pos_half) - i8::from(neg_half),
        Step0Mode::Verbatim => i8::from(neg_half) - i8::from(pos_half),
        Step0Mode::Hinge => {
            let lhs = p as u128 * t_n as u128;
            let rhs = n as u128 * t_p as u128;
            match lhs.cmp(&rhs) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            }
        }
    }
}

/// Response counts `(p, n)` of every stump, positives being `label == class`.
pub fn step0_counts(bits: &BitMatrix, labels: &[usize], class: usize) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    if labels.len() != bits.n_samples() {
        return Err(MbklError::DimensionMismatch {
            expected: bits.n_samples(),
            found: labels.len(),
        });
    }
    let mask = BitMatrix::mask_from(labels.len(), |j| labels[j] == class);
    let t_p = labels.iter().filter(|&&l| l == class).count();
    if t_p == 0 {
        return Err(MbklError::MissingClass(class));
    }
    let t_n = labels.len() - t_p;
    if t_n == 0 {
        return Err(MbklError::SingleClass);
    }
    let counts = (0..bits.n_stumps())
        .map(|k| {
            let p = bits.count_ones_masked(k, &mask);
            (p, bits.count_ones(k) - p)
        })
        .collect();
    Ok((counts, t_p, t_n))
}

/// One-vs-rest sign vector of `class` over every stump in `bits`.
pub fn step0_init(bits: &BitMatrix, labels: &[usize], class: usize, mode: Step0Mode) -> Result<Vec<i8>> {
    let (counts, t_p, t_n) = step0_counts(bits, labels, class)?;
    Ok(counts
        .into_iter()
        .map(|(p, n)| step0_sign(p, t_p, n, t_n, mode))
        .collect())
}
