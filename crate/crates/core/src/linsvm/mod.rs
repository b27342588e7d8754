//! Primal linear SVMs with an unregularized bias.
//!
//! * [`train_l2`]: `1/2 ||w||^2 + C sum_i max(0, 1 - y_i (w.x_i + b))`
//! * [`train_l1`]: `||w||_1 + C sum_i max(0, 1 - y_i (w.x_i + b))`
//!
//! Both are exact convex solvers judged by their final primal objective: the
//! L2 problem is solved through its dual by SMO and closed with an exact bias
//! line search and a duality-gap certificate, the L1 problem is the linear
//! program solved by a revised simplex.

mod simplex;
mod smo;

pub use smo::{train_l2_with_gram, Gram};

use serde::{Deserialize, Serialize};

use crate::error::{MbklError, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Hinge penalty.
    pub c: f64,
    /// Relative tolerance on the primal objective.
    pub tol: f64,
    /// Budget in passes over the data: SMO may take `max_epochs * N` pair
    /// updates, the simplex `max_epochs * (N + m)` pivots.
    pub max_epochs: usize,
    /// Both solvers are deterministic; the seed is carried so configurations
    /// round-trip through reports unchanged.
    pub seed: u64,
    /// Accept labels of a single sign and return `w = 0, b = y`.
    pub allow_single_class: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            tol: 1e-6,
            max_epochs: 1000,
            seed: 0,
            allow_single_class: false,
        }
    }
}

impl SolverConfig {
    pub fn with_c(c: f64) -> Self {
        SolverConfig {
            c,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(MbklError::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(MbklError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(MbklError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Primal objective of (`weights`, `bias`) on the training data.
    pub objective: f64,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
}

impl LinearModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().filter(|&&w| w == 0.0).count() as f64 / self.weights.len() as f64
    }
}

/// Row-wise `w.x + b`.
pub fn decision_values(model: &LinearModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.weights.len() {
        return Err(MbklError::DimensionMismatch {
            expected: model.weights.len(),
            found: x.cols(),
        });
    }
    Ok(x.iter_rows().map(|r| model.score(r)).collect())
}

#[inline]
pub fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

fn hinge_sum(x: &Matrix, y: &[f64], w: &[f64], b: f64) -> f64 {
    x.iter_rows()
        .zip(y)
        .map(|(r, &yi)| hinge(yi * (dot(w, r) + b)))
        .sum()
}

pub fn l2_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    0.5 * dot(w, w) + c * hinge_sum(x, y, w, b)
}

pub fn l1_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    w.iter().map(|v| v.abs()).sum::<f64>() + c * hinge_sum(x, y, w, b)
}

/// Checks shapes, labels and finiteness. Returns the common label when only
/// one sign is present.
fn validate_problem(x: &Matrix, y: &[f64], cfg: &SolverConfig) -> Result<Option<f64>> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(MbklError::EmptyDataset);
    }
    if y.len() != x.rows() {
        return Err(MbklError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(MbklError::InvalidLabel(bad));
    }
    if let Some((row, column)) = x.find_non_finite() {
        return Err(MbklError::NonFinite { row, column });
    }
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        if cfg.allow_single_class {
            return Ok(Some(first));
        }
        return Err(MbklError::SingleClass);
    }
    Ok(None)
}

fn single_class_model(m: usize, label: f64) -> LinearModel {
    LinearModel {
        weights: vec![0.0; m],
        bias: label,
        objective: 0.0,
        converged: true,
    }
}

/// Bias minimizing `sum_i hinge(y_i (z_i + b))` for fixed scores `z`.
///
/// The objective is convex piecewise linear with breakpoints `y_i - z_i`;
/// its slope starts at `-#positives` and rises by one at each breakpoint, so
/// the minimizers form the interval between the `P`-th and `(P+1)`-th
/// smallest breakpoints. The midpoint is returned.
pub(crate) fn optimal_bias(z: &[f64], y: &[f64]) -> f64 {
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let mut bp: Vec<f64> = z.iter().zip(y).map(|(&zi, &yi)| yi - zi).collect();
    bp.sort_by(f64::total_cmp);
    match n_pos {
        0 => bp[0] - 1.0,
        p if p == bp.len() => bp[p - 1] + 1.0,
        p => 0.5 * (bp[p - 1] + bp[p]),
    }
}

/// Best of `b in {-1, 0, 1}` at `w = 0`; the objective both solvers start from.
pub fn initial_objective(y: &[f64], c: f64) -> f64 {
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|&b| c * y.iter().map(|&yi| hinge(yi * b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// L2-regularized hinge SVM.
pub fn train_l2(x: &Matrix, y: &[f64], cfg: &SolverConfig) -> Result<LinearModel> {
    if let Some(label) = validate_problem(x, y, cfg)? {
        return Ok(single_class_model(x.cols(), label));
    }
    let gram = Gram::linear(x);
    smo::solve(x, &gram, y, cfg)
}

/// L1-regularized hinge SVM (a linear program).
pub fn train_l1(x: &Matrix, y: &[f64], cfg: &SolverConfig) -> Result<LinearModel> {
    if let Some(label) = validate_problem(x, y, cfg)? {
        return Ok(single_class_model(x.cols(), label));
    }
    simplex::solve(x, y, cfg)
}

/// `train_l1` for each penalty in `cs` (which overrides `cfg.c`). Solves
/// run in the given order, each warm-started from the previous solution,
/// so a monotone list is cheapest.
pub fn train_l1_path(x: &Matrix, y: &[f64], cs: &[f64], cfg: &SolverConfig) -> Result<Vec<LinearModel>> {
    for &c in cs {
        SolverConfig { c, ..*cfg }.validate()?;
    }
    if let Some(label) = validate_problem(x, y, cfg)? {
        return Ok(cs.iter().map(|_| single_class_model(x.cols(), label)).collect());
    }
    simplex::solve_path(x, y, cs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_bias_two_points() {
        // w = 1 on x = +1 / -1: both breakpoints at 0.
        assert_eq!(optimal_bias(&[1.0, -1.0], &[1.0, -1.0]), 0.0);
    }

    #[test]
    fn optimal_bias_matches_scan() {
        let z = [0.3, -1.2, 2.0, 0.1, -0.4, 0.9];
        let y = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let h = |b: f64| -> f64 { z.iter().zip(&y).map(|(&zi, &yi)| hinge(yi * (zi + b))).sum() };
        let best = optimal_bias(&z, &y);
        for k in -400..=400 {
            let b = k as f64 * 0.01;
            assert!(h(best) <= h(b) + 1e-12, "b={b}");
        }
    }

    #[test]
    fn decision_values_affine() {
        let m = LinearModel {
            weights: vec![0.0, 0.0],
            bias: 0.3,
            objective: 0.0,
            converged: true,
        };
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 4.0]]).unwrap();
        assert_eq!(decision_values(&m, &x).unwrap(), vec![0.3, 0.3]);
        let w = LinearModel {
            weights: vec![1.5, -2.0],
            bias: 0.0,
            ..m.clone()
        };
        let x = Matrix::from_rows(&[[1.5, -2.0]]).unwrap();
        assert_eq!(decision_values(&w, &x).unwrap(), vec![1.5 * 1.5 + 4.0]);
        let bad = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(decision_values(&w, &bad).is_err());
    }

    #[test]
    fn single_class_inputs() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let y = [1.0, 1.0];
        assert!(matches!(train_l2(&x, &y, &SolverConfig::default()), Err(MbklError::SingleClass)));
        let cfg = SolverConfig {
            allow_single_class: true,
            ..Default::default()
        };
        for m in [train_l2(&x, &y, &cfg).unwrap(), train_l1(&x, &y, &cfg).unwrap()] {
            assert_eq!(m.weights, vec![0.0, 0.0]);
            assert_eq!(m.bias, 1.0);
            assert_eq!(m.objective, 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]).unwrap();
        assert!(matches!(
            train_l2(&x, &[1.0, -1.0], &SolverConfig::default()),
            Err(MbklError::NonFinite { row: 1, column: 0 })
        ));
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(matches!(
            train_l1(&x, &[1.0, 0.0], &SolverConfig::default()),
            Err(MbklError::InvalidLabel(_))
        ));
        assert!(train_l1(&x, &[1.0, -1.0], &SolverConfig::with_c(0.0)).is_err());
    }

    #[test]
    fn two_point_problems() {
        let x = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let y = [1.0, -1.0];
        let l2 = train_l2(&x, &y, &SolverConfig::with_c(1000.0)).unwrap();
        assert!((l2.weights[0] - 1.0).abs() < 1e-6);
        assert!(l2.bias.abs() < 1e-6);
        for s in decision_values(&l2, &x).unwrap().iter().zip(&y) {
            assert!((s.0 * s.1 - 1.0).abs() < 1e-6);
        }
        let l1 = train_l1(&x, &y, &SolverConfig::with_c(1000.0)).unwrap();
        assert!((l1.weights[0].abs() - 1.0).abs() < 1e-9);
        assert!((l1.objective - 1.0).abs() < 1e-9);
        let x2 = Matrix::from_rows(&[[2.0], [-2.0]]).unwrap();
        let l1s = train_l1(&x2, &y, &SolverConfig::with_c(1000.0)).unwrap();
        assert!((l1s.weights[0].abs() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn objective_never_exceeds_start() {
        let x = Matrix::from_rows(&[[0.1, 2.0], [0.4, -1.0], [-0.3, 0.5], [2.0, 0.0]]).unwrap();
        let y = [1.0, -1.0, -1.0, 1.0];
        for c in [0.01, 1.0, 100.0] {
            let start = initial_objective(&y, c);
            assert!(train_l2(&x, &y, &SolverConfig::with_c(c)).unwrap().objective <= start + 1e-12);
            assert!(train_l1(&x, &y, &SolverConfig::with_c(c)).unwrap().objective <= start + 1e-12);
        }
    }
}
