use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::ops::Deref;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use super::{l2_objective, optimal_bias, validate_problem, LinearModel, SolverConfig};
use crate::error::{MbklError, Result};
use crate::matrix::{dot, Matrix};

/// Largest sample count for which the full Gram matrix is materialized.
const FULL_GRAM_LIMIT: usize = 4096;
/// Row cache budget, in f64 entries, when the Gram matrix is computed lazily.
const CACHE_ENTRIES: usize = 1 << 24;
const TAU: f64 = 1e-12;

/// Unsigned inner products `K_ij = x_i . x_j` of the training rows.
#[derive(Debug, Clone)]
pub enum Gram {
    Full { n: usize, values: Vec<f64> },
    /// Rows are computed from the features on demand.
    Lazy,
}

impl Gram {
    /// Materializes `X X^T` when it fits, otherwise defers to on-demand rows.
    pub fn linear(x: &Matrix) -> Gram {
        let n = x.rows();
        if n > FULL_GRAM_LIMIT {
            return Gram::Lazy;
        }
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = dot(xi, x.row(j));
            }
        });
        // Mirror the upper triangle so K is exactly symmetric.
        for i in 0..n {
            for j in 0..i {
                values[i * n + j] = values[j * n + i];
            }
        }
        Gram::Full { n, values }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Gram> {
        if values.len() != n * n {
            return Err(MbklError::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        Ok(Gram::Full { n, values })
    }
}

enum Row<'a> {
    Borrowed(&'a [f64]),
    Shared(Arc<[f64]>),
}

impl Deref for Row<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        match self {
            Row::Borrowed(r) => r,
            Row::Shared(r) => r,
        }
    }
}

struct RowCache {
    rows: HashMap<usize, Arc<[f64]>>,
    order: VecDeque<usize>,
    capacity: usize,
}

enum Rows<'a> {
    Full { n: usize, values: &'a [f64] },
    Lazy { x: &'a Matrix, cache: RefCell<RowCache> },
}

impl<'a> Rows<'a> {
    fn new(x: &'a Matrix, gram: &'a Gram) -> Self {
        match gram {
            Gram::Full { n, values } => Rows::Full { n: *n, values },
            Gram::Lazy => Rows::Lazy {
                x,
                cache: RefCell::new(RowCache {
                    rows: HashMap::new(),
                    order: VecDeque::new(),
                    capacity: (CACHE_ENTRIES / x.rows().max(1)).max(2),
                }),
            },
        }
    }

    fn row(&self, i: usize) -> Row<'_> {
        match self {
            Rows::Full { n, values } => Row::Borrowed(&values[i * n..(i + 1) * n]),
            Rows::Lazy { x, cache } => {
                if let Some(r) = cache.borrow().rows.get(&i) {
                    return Row::Shared(r.clone());
                }
                let xi = x.row(i);
                let r: Arc<[f64]> = (0..x.rows()).map(|j| dot(xi, x.row(j))).collect();
                let mut c = cache.borrow_mut();
                if c.order.len() >= c.capacity {
                    if let Some(old) = c.order.pop_front() {
                        c.rows.remove(&old);
                    }
                }
                c.order.push_back(i);
                c.rows.insert(i, r.clone());
                Row::Shared(r)
            }
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Rows::Full { n, values } => values[i * n + i],
            Rows::Lazy { x, .. } => dot(x.row(i), x.row(i)),
        }
    }
}

/// L2 SVM over training rows `x` with a precomputed Gram matrix of those rows.
pub fn train_l2_with_gram(
    x: &Matrix,
    gram: &Gram,
    y: &[f64],
    cfg: &SolverConfig,
) -> Result<LinearModel> {
    if let Gram::Full { n, .. } = gram {
        if *n != x.rows() {
            return Err(MbklError::DimensionMismatch {
                expected: x.rows(),
                found: *n,
            });
        }
    }
    if let Some(label) = validate_problem(x, y, cfg)? {
        return Ok(super::single_class_model(x.cols(), label));
    }
    solve(x, gram, y, cfg)
}

/// SMO on the dual `min 1/2 a'Qa - 1'a, 0 <= a <= C, y'a = 0` with
/// second-order working-set selection. The stopping threshold on the
/// maximal KKT violation is tightened until the duality gap certifies the
/// requested relative primal accuracy.
pub(super) fn solve(x: &Matrix, gram: &Gram, y: &[f64], cfg: &SolverConfig) -> Result<LinearModel> {
    let n = x.rows();
    let c = cfg.c;
    let rows = Rows::new(x, gram);
    let diag: Vec<f64> = (0..n).map(|i| rows.diag(i)).collect();

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let budget = cfg.max_epochs.saturating_mul(n.max(100));
    let mut iterations = 0usize;
    let mut eps = 1e-3;
    let mut converged = false;

    let (w, b) = loop {
        let exhausted = loop {
            if iterations >= budget {
                break true;
            }
            let Some((i, j)) = select_pair(&alpha, &grad, y, c, &diag, &rows, eps) else {
                break false;
            };
            iterations += 1;
            update_pair(i, j, &mut alpha, &mut grad, y, c, &diag, &rows);
        };

        let mut w = vec![0.0; x.cols()];
        for (t, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let s = a * y[t];
                for (wk, xk) in w.iter_mut().zip(x.row(t)) {
                    *wk += s * xk;
                }
            }
        }
        let z: Vec<f64> = x.iter_rows().map(|r| dot(&w, r)).collect();
        let b = optimal_bias(&z, y);
        let primal = l2_objective(x, y, &w, b, c);
        let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
        if primal - dual <= cfg.tol * primal.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break (w, b);
        }
        if exhausted || eps < 1e-14 {
            break (w, b);
        }
        eps *= 0.1;
    };

    let mut model = LinearModel {
        objective: l2_objective(x, y, &w, b, c),
        weights: w,
        bias: b,
        converged,
    };
    let b0 = [-1.0, 0.0, 1.0]
        .into_iter()
        .min_by(|&p, &q| {
            let zeros = vec![0.0; x.cols()];
            l2_objective(x, y, &zeros, p, c).total_cmp(&l2_objective(x, y, &zeros, q, c))
        })
        .unwrap_or(0.0);
    let start = l2_objective(x, y, &vec![0.0; x.cols()], b0, c);
    if model.objective > start {
        model = LinearModel {
            weights: vec![0.0; x.cols()],
            bias: b0,
            objective: start,
            converged: model.converged,
        };
    }
    if !model.converged {
        warn!(
            "L2 solver stopped after {iterations} updates before reaching tol {}",
            cfg.tol
        );
    }
    Ok(model)
}

#[inline]
fn in_up(a: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        a < c
    } else {
        a > 0.0
    }
}

#[inline]
fn in_low(a: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        a > 0.0
    } else {
        a < c
    }
}

fn select_pair(
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    c: f64,
    diag: &[f64],
    rows: &Rows<'_>,
    eps: f64,
) -> Option<(usize, usize)> {
    let mut gmax = f64::NEG_INFINITY;
    let mut i = usize::MAX;
    for t in 0..alpha.len() {
        if in_up(alpha[t], y[t], c) {
            let v = -y[t] * grad[t];
            if v >= gmax {
                gmax = v;
                i = t;
            }
        }
    }
    if i == usize::MAX {
        return None;
    }
    let ki = rows.row(i);
    let mut gmax2 = f64::NEG_INFINITY;
    let mut j = usize::MAX;
    let mut best = f64::INFINITY;
    for t in 0..alpha.len() {
        if !in_low(alpha[t], y[t], c) {
            continue;
        }
        let v = y[t] * grad[t];
        if v >= gmax2 {
            gmax2 = v;
        }
        let gain = gmax + v;
        if gain > 0.0 {
            let mut quad = diag[i] + diag[t] - 2.0 * ki[t];
            if quad <= 0.0 {
                quad = TAU;
            }
            let obj = -(gain * gain) / quad;
            if obj <= best {
                best = obj;
                j = t;
            }
        }
    }
    if gmax + gmax2 < eps || j == usize::MAX {
        return None;
    }
    Some((i, j))
}

#[allow(clippy::too_many_arguments)]
fn update_pair(
    i: usize,
    j: usize,
    alpha: &mut [f64],
    grad: &mut [f64],
    y: &[f64],
    c: f64,
    diag: &[f64],
    rows: &Rows<'_>,
) {
    let ki = rows.row(i);
    let qij = y[i] * y[j] * ki[j];
    let (old_i, old_j) = (alpha[i], alpha[j]);
    if y[i] != y[j] {
        let mut quad = diag[i] + diag[j] + 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let mut quad = diag[i] + diag[j] - 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
    let di = alpha[i] - old_i;
    let dj = alpha[j] - old_j;
    if di != 0.0 {
        let s = di * y[i];
        for t in 0..grad.len() {
            grad[t] += y[t] * s * ki[t];
        }
    }
    drop(ki);
    if dj != 0.0 {
        let kj = rows.row(j);
        let s = dj * y[j];
        for t in 0..grad.len() {
            grad[t] += y[t] * s * kj[t];
        }
    }
}
