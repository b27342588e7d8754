//! Revised primal simplex for the L1-regularized hinge LP
//!
//! ```text
//! min  sum_r (u_r + v_r) + C sum_i xi_i
//! s.t. sum_r a_ir (u_r - v_r) + y_i (b+ - b-) + xi_i - s_i = 1
//!      u, v, b+, b-, xi, s >= 0,        a_ir = y_i x_ir
//! ```
//!
//! The slack basis `xi = 1` is feasible, so no phase one is needed. Identical
//! or sign-flipped feature columns are merged before solving; the weight of a
//! merged column is split evenly across its members, which leaves both the
//! scores and the L1 norm unchanged.

use std::collections::HashMap;

use log::debug;
use nalgebra::DMatrix;

use super::{l1_objective, optimal_bias, LinearModel, SolverConfig};
use crate::error::{MbklError, Result};
use crate::matrix::{dot, Matrix};

const PIVOT_TOL: f64 = 1e-7;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 50;
/// Refactorization periods without objective progress before giving up.
const STALL_PERIODS: usize = 4;

/// Distinct feature columns up to sign. `members[r]` lists `(column, sign)`.
struct Columns {
    /// Column-major `a_r`, each of length `n`.
    a: Vec<f64>,
    members: Vec<Vec<(usize, f64)>>,
}

fn merge_columns(x: &Matrix, y: &[f64]) -> Columns {
    let n = x.rows();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut a = Vec::new();
    let mut members: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut col = vec![0.0; n];
    for j in 0..x.cols() {
        for i in 0..n {
            col[i] = y[i] * x.get(i, j);
        }
        let Some(first) = col.iter().find(|v| **v != 0.0) else {
            continue;
        };
        let sign = if *first > 0.0 { 1.0 } else { -1.0 };
        // `+ 0.0` folds -0.0 into 0.0 so both hash alike.
        let key: Vec<u64> = col.iter().map(|v| (sign * v + 0.0).to_bits()).collect();
        match index.get(&key) {
            Some(&r) => members[r].push((j, sign)),
            None => {
                index.insert(key, members.len());
                a.extend(col.iter().map(|v| sign * v));
                members.push(vec![(j, sign)]);
            }
        }
    }
    Columns { a, members }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Var {
    U(usize),
    V(usize),
    BiasPos,
    BiasNeg,
    Xi(usize),
    Slack(usize),
}

struct Lp<'a> {
    n: usize,
    m: usize,
    c: f64,
    y: &'a [f64],
    cols: &'a Columns,
}

impl Lp<'_> {
    fn n_vars(&self) -> usize {
        2 * self.m + 2 + 2 * self.n
    }

    fn var(&self, j: usize) -> Var {
        let m = self.m;
        let n = self.n;
        match j {
            j if j < m => Var::U(j),
            j if j < 2 * m => Var::V(j - m),
            j if j == 2 * m => Var::BiasPos,
            j if j == 2 * m + 1 => Var::BiasNeg,
            j if j < 2 * m + 2 + n => Var::Xi(j - 2 * m - 2),
            j => Var::Slack(j - 2 * m - 2 - n),
        }
    }

    fn cost(&self, j: usize) -> f64 {
        match self.var(j) {
            Var::U(_) | Var::V(_) => 1.0,
            Var::Xi(_) => self.c,
            _ => 0.0,
        }
    }

    fn a_col(&self, r: usize) -> &[f64] {
        &self.cols.a[r * self.n..(r + 1) * self.n]
    }

    /// Writes constraint column `j` into `out`.
    fn column(&self, j: usize, out: &mut [f64]) {
        match self.var(j) {
            Var::U(r) => out.copy_from_slice(self.a_col(r)),
            Var::V(r) => {
                for (o, a) in out.iter_mut().zip(self.a_col(r)) {
                    *o = -a;
                }
            }
            Var::BiasPos => out.copy_from_slice(self.y),
            Var::BiasNeg => {
                for (o, a) in out.iter_mut().zip(self.y) {
                    *o = -a;
                }
            }
            Var::Xi(i) => {
                out.fill(0.0);
                out[i] = 1.0;
            }
            Var::Slack(i) => {
                out.fill(0.0);
                out[i] = -1.0;
            }
        }
    }

    /// The variable whose column is the negation of column `j`. Its reduced
    /// cost is never negative while `j` is basic, but rounding can say so,
    /// and entering it would make the basis singular.
    fn mirror(&self, j: usize) -> usize {
        let (m, n) = (self.m, self.n);
        let xi0 = 2 * m + 2;
        match j {
            j if j < m => j + m,
            j if j < 2 * m => j - m,
            j if j < xi0 => 4 * m + 1 - j,
            j if j < xi0 + n => j + n,
            j => j - n,
        }
    }

    /// `pi . A_j` using the structure of column `j`.
    fn price(&self, j: usize, pi: &[f64], pi_y: f64) -> f64 {
        let pa = match self.var(j) {
            Var::U(r) => dot(pi, self.a_col(r)),
            Var::V(r) => -dot(pi, self.a_col(r)),
            Var::BiasPos => pi_y,
            Var::BiasNeg => -pi_y,
            Var::Xi(i) => pi[i],
            Var::Slack(i) => -pi[i],
        };
        self.cost(j) - pa
    }
}

struct State {
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Row-major dense inverse of the basis matrix.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pi: Vec<f64>,
    /// Reduced cost of every variable, zero for basic ones.
    d: Vec<f64>,
    /// Devex reference weights.
    gamma: Vec<f64>,
}

impl State {
    /// The all-slack basis `xi = 1`.
    fn slack(n: usize, n_vars: usize, xi0: usize) -> State {
        let mut st = State {
            basis: (0..n).map(|i| xi0 + i).collect(),
            in_basis: vec![false; n_vars],
            binv: vec![0.0; n * n],
            xb: vec![1.0; n],
            pi: vec![0.0; n],
            d: vec![0.0; n_vars],
            gamma: vec![1.0; n_vars],
        };
        for &j in &st.basis {
            st.in_basis[j] = true;
        }
        st
    }

    fn objective(&self, lp: &Lp<'_>) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, &v)| lp.cost(j) * v).sum()
    }

    /// Recomputes `B^-1`, `x_B`, the duals and every reduced cost.
    fn refactor(&mut self, lp: &Lp<'_>) -> Result<()> {
        let n = lp.n;
        let mut col = vec![0.0; n];
        let mut b = DMatrix::<f64>::zeros(n, n);
        for (k, &j) in self.basis.iter().enumerate() {
            lp.column(j, &mut col);
            for i in 0..n {
                b[(i, k)] = col[i];
            }
        }
        let inv = b
            .try_inverse()
            .ok_or_else(|| MbklError::Solver("singular simplex basis".into()))?;
        for i in 0..n {
            for k in 0..n {
                self.binv[i * n + k] = inv[(i, k)];
            }
        }
        // x_B = B^-1 1 and pi = c_B B^-1.
        for i in 0..n {
            let row = &self.binv[i * n..(i + 1) * n];
            self.xb[i] = row.iter().sum::<f64>().max(0.0);
        }
        self.pi.fill(0.0);
        for (k, &j) in self.basis.iter().enumerate() {
            let cb = lp.cost(j);
            if cb != 0.0 {
                let row = &self.binv[k * n..(k + 1) * n];
                for (p, v) in self.pi.iter_mut().zip(row) {
                    *p += cb * v;
                }
            }
        }
        let pi_y = dot(&self.pi, lp.y);
        let m = lp.m;
        for r in 0..m {
            let p = dot(&self.pi, lp.a_col(r));
            self.d[r] = 1.0 - p;
            self.d[m + r] = 1.0 + p;
        }
        for j in 2 * m..lp.n_vars() {
            self.d[j] = lp.price(j, &self.pi, pi_y);
        }
        for &j in &self.basis {
            self.d[j] = 0.0;
        }
        Ok(())
    }

    /// Refactorizes, falling back to `good` when the basis is singular.
    /// Returns whether the current basis was kept.
    fn refactor_or_restore(&mut self, lp: &Lp<'_>, good: &mut Vec<usize>) -> Result<bool> {
        if self.refactor(lp).is_ok() {
            good.clone_from(&self.basis);
            return Ok(true);
        }
        debug!("singular simplex basis, restoring the last factorized one");
        for &j in &self.basis {
            self.in_basis[j] = false;
        }
        self.basis.clone_from(good);
        for &j in &self.basis {
            self.in_basis[j] = true;
        }
        self.refactor(lp)?;
        Ok(false)
    }

    /// Devex choice among improving columns or, in Bland mode, the first one.
    fn entering(&self, lp: &Lp<'_>, opt_tol: f64, bland: bool) -> Option<usize> {
        let candidates = (0..self.d.len())
            .filter(|&j| !self.in_basis[j] && self.d[j] < -opt_tol && !self.in_basis[lp.mirror(j)]);
        if bland {
            return candidates.into_iter().next();
        }
        let mut best = 0.0;
        let mut pick = None;
        for j in candidates {
            let score = self.d[j] * self.d[j] / self.gamma[j];
            if score > best {
                best = score;
                pick = Some(j);
            }
        }
        pick
    }
}

/// `row . A_j` for every variable `j`, given one row `row` of `B^-1`.
fn row_times_columns(lp: &Lp<'_>, row: &[f64], out: &mut [f64]) {
    let m = lp.m;
    let n = lp.n;
    for r in 0..m {
        let p = dot(row, lp.a_col(r));
        out[r] = p;
        out[m + r] = -p;
    }
    let ry = dot(row, lp.y);
    out[2 * m] = ry;
    out[2 * m + 1] = -ry;
    let xi0 = 2 * m + 2;
    for i in 0..n {
        out[xi0 + i] = row[i];
        out[xi0 + n + i] = -row[i];
    }
}

/// Pivots `st` towards optimality for `lp`. Returns whether optimality was
/// proven; `false` after the pivot budget or when the true objective stops
/// improving over several refactorization periods (numerical stalling).
fn iterate(lp: &Lp<'_>, st: &mut State, budget: usize) -> Result<bool> {
    let n = lp.n;
    st.refactor(lp)?;
    st.gamma.fill(1.0);
    // Last basis that factorized; rounding can still walk into a singular
    // one, in which case the solve stops there.
    let mut good = st.basis.clone();
    let opt_tol = 1e-9 * (1.0 + lp.c);
    let refactor_every = n.max(100);
    let mut alpha = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut beta = vec![0.0; lp.n_vars()];
    let mut since_refactor = 0usize;
    let mut degenerate_run = 0usize;
    let mut best_obj = st.objective(lp);
    let mut stalled = 0usize;

    for _ in 0..budget {
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let Some(q) = st.entering(lp, opt_tol, bland) else {
            if since_refactor == 0 {
                return Ok(true);
            }
            // Confirm optimality against a fresh factorization.
            if !st.refactor_or_restore(lp, &mut good)? {
                return Ok(false);
            }
            since_refactor = 0;
            continue;
        };

        lp.column(q, &mut col);
        for i in 0..n {
            alpha[i] = dot(&st.binv[i * n..(i + 1) * n], &col);
        }

        // Harris two-pass ratio test.
        let mut theta_max = f64::INFINITY;
        for i in 0..n {
            if alpha[i] > PIVOT_TOL {
                theta_max = theta_max.min((st.xb[i] + FEAS_TOL) / alpha[i]);
            }
        }
        if !theta_max.is_finite() {
            return Err(MbklError::Solver("L1 program reported unbounded".into()));
        }
        let mut leave = usize::MAX;
        let mut best_alpha = 0.0;
        for i in 0..n {
            if alpha[i] > PIVOT_TOL && st.xb[i] / alpha[i] <= theta_max {
                let better = if bland {
                    leave == usize::MAX || st.basis[i] < st.basis[leave]
                } else {
                    alpha[i] > best_alpha
                };
                if better {
                    leave = i;
                    best_alpha = alpha[i];
                }
            }
        }
        let r = leave;
        let step = (st.xb[r] / alpha[r]).max(0.0);
        if step <= FEAS_TOL {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }

        for i in 0..n {
            st.xb[i] = (st.xb[i] - step * alpha[i]).max(0.0);
        }
        st.xb[r] = step;

        let ar = alpha[r];
        let (head, tail) = st.binv.split_at_mut(r * n);
        let (pivot_row, rest) = tail.split_at_mut(n);
        for v in pivot_row.iter_mut() {
            *v /= ar;
        }
        for i in 0..n {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            let row = if i < r {
                &mut head[i * n..(i + 1) * n]
            } else {
                &mut rest[(i - r - 1) * n..(i - r) * n]
            };
            for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
        }

        // The new pivot row gives alpha_rj / alpha_rq for every column,
        // which updates the reduced costs and the Devex weights.
        row_times_columns(lp, pivot_row, &mut beta);
        let leaving = st.basis[r];
        st.in_basis[leaving] = false;
        st.in_basis[q] = true;
        st.basis[r] = q;
        let (dq, gq) = (st.d[q], st.gamma[q]);
        for j in 0..beta.len() {
            if st.in_basis[j] || beta[j] == 0.0 {
                continue;
            }
            st.d[j] -= dq * beta[j];
            st.gamma[j] = st.gamma[j].max(beta[j] * beta[j] * gq);
        }
        st.d[leaving] = -dq / ar;
        st.gamma[leaving] = (gq / (ar * ar)).max(1.0);
        st.d[q] = 0.0;

        since_refactor += 1;
        if since_refactor >= refactor_every {
            if !st.refactor_or_restore(lp, &mut good)? {
                return Ok(false);
            }
            since_refactor = 0;
            let obj = st.objective(lp);
            if obj < best_obj - 1e-10 * (1.0 + best_obj.abs()) {
                best_obj = obj;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_PERIODS {
                    return Ok(false);
                }
            }
        }
    }
    Ok(false)
}

fn extract(x: &Matrix, y: &[f64], lp: &Lp<'_>, st: &State, converged: bool) -> LinearModel {
    let mut w_merged = vec![0.0; lp.m];
    let mut b = 0.0;
    for (k, &j) in st.basis.iter().enumerate() {
        let v = st.xb[k];
        match lp.var(j) {
            Var::U(r) => w_merged[r] += v,
            Var::V(r) => w_merged[r] -= v,
            Var::BiasPos => b += v,
            Var::BiasNeg => b -= v,
            _ => {}
        }
    }
    let mut w = vec![0.0; x.cols()];
    for (r, group) in lp.cols.members.iter().enumerate() {
        if w_merged[r] != 0.0 {
            let share = w_merged[r] / group.len() as f64;
            for &(j, sign) in group {
                w[j] = sign * share;
            }
        }
    }
    let c = lp.c;
    let mut objective = l1_objective(x, y, &w, b, c);
    let z: Vec<f64> = x.iter_rows().map(|row| dot(&w, row)).collect();
    let b_line = optimal_bias(&z, y);
    let line_obj = l1_objective(x, y, &w, b_line, c);
    if line_obj < objective {
        b = b_line;
        objective = line_obj;
    }
    let (b0, start) = [-1.0, 0.0, 1.0]
        .into_iter()
        .map(|b0| (b0, l1_objective(x, y, &vec![0.0; x.cols()], b0, c)))
        .fold((0.0, f64::INFINITY), |acc, t| if t.1 < acc.1 { t } else { acc });
    if objective > start {
        w.fill(0.0);
        b = b0;
        objective = start;
    }
    LinearModel {
        weights: w,
        bias: b,
        objective,
        converged,
    }
}

pub(super) fn solve(x: &Matrix, y: &[f64], cfg: &SolverConfig) -> Result<LinearModel> {
    let mut models = solve_path(x, y, &[cfg.c], cfg)?;
    Ok(models.remove(0))
}

/// Solves for every penalty in `cs`, in the given order. The constraints do
/// not depend on `C`, so each solve starts from the previous optimal basis.
pub(super) fn solve_path(x: &Matrix, y: &[f64], cs: &[f64], cfg: &SolverConfig) -> Result<Vec<LinearModel>> {
    let n = x.rows();
    let cols = merge_columns(x, y);
    let m = cols.members.len();
    let n_vars = 2 * m + 2 + 2 * n;
    let mut st = State::slack(n, n_vars, 2 * m + 2);
    let budget = cfg.max_epochs.saturating_mul(n + m);
    let mut out = Vec::with_capacity(cs.len());
    for &c in cs {
        let lp = Lp {
            n,
            m,
            c,
            y,
            cols: &cols,
        };
        let converged = iterate(&lp, &mut st, budget)?;
        if !converged {
            debug!("L1 simplex (C = {c}) stopped before proving optimality");
        }
        out.push(extract(x, y, &lp, &st, converged));
    }
    Ok(out)
}
