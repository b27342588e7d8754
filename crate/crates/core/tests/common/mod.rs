//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use mbkl::matrix::Matrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn naive_hinge_sum(x: &Matrix, y: &[f64], w: &[f64], b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let mut s = b;
        for j in 0..x.cols() {
            s += w[j] * x.get(i, j);
        }
        total += (1.0 - y[i] * s).max(0.0);
    }
    total
}

/// Best bias for fixed `w`: the hinge sum is convex piecewise linear in `b`,
/// so its minimum sits on one of the breakpoints `y_i - w.x_i`.
fn best_bias(x: &Matrix, y: &[f64], w: &[f64]) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for i in 0..x.rows() {
        let z: f64 = (0..x.cols()).map(|j| w[j] * x.get(i, j)).sum();
        let b = y[i] - z;
        let h = naive_hinge_sum(x, y, w, b);
        if h < best.1 {
            best = (b, h);
        }
    }
    best
}

/// Optimum of `1/2 |w|^2 + C hinge` by enumerating every dual bound pattern
/// `alpha_i in {0, C, free}`: each pattern fixes the free multipliers and
/// the bias through the margin equations. Every candidate is a primal point,
/// and the optimal pattern reproduces the optimum, so the minimum over
/// candidates is the optimum.
pub fn l2_oracle(x: &Matrix, y: &[f64], c: f64) -> f64 {
    let n = x.rows();
    let m = x.cols();
    let k = |i: usize, j: usize| (0..m).map(|t| x.get(i, t) * x.get(j, t)).sum::<f64>();
    let mut best = f64::INFINITY;
    let mut pattern = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 2).collect();
        let mut alpha = vec![0.0; n];
        for i in 0..n {
            if pattern[i] == 1 {
                alpha[i] = c;
            }
        }
        let mut ok = true;
        if !free.is_empty() {
            let f = free.len();
            let mut a = DMatrix::<f64>::zeros(f + 1, f + 1);
            let mut rhs = DVector::<f64>::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = y[i] * y[j] * k(i, j);
                }
                a[(r, f)] = y[i];
                a[(f, r)] = y[i];
                let fixed: f64 = (0..n)
                    .filter(|&j| pattern[j] == 1)
                    .map(|j| y[i] * y[j] * c * k(i, j))
                    .sum();
                rhs[r] = 1.0 - fixed;
            }
            rhs[f] = -(0..n).filter(|&j| pattern[j] == 1).map(|j| y[j] * c).sum::<f64>();
            match a.svd(true, true).solve(&rhs, 1e-12) {
                Ok(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        alpha[i] = sol[r];
                    }
                }
                Err(_) => ok = false,
            }
        }
        if ok {
            let mut w = vec![0.0; m];
            for i in 0..n {
                for t in 0..m {
                    w[t] += alpha[i] * y[i] * x.get(i, t);
                }
            }
            let (_, h) = best_bias(x, y, &w);
            let obj = 0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * h;
            best = best.min(obj);
        }
        let mut t = 0;
        while t < n && pattern[t] == 2 {
            pattern[t] = 0;
            t += 1;
        }
        if t == n {
            break;
        }
        pattern[t] += 1;
    }
    best
}

/// Optimum of `|w|_1 + C hinge` by vertex enumeration: the objective is
/// convex piecewise linear in `(w, b)` with kinks on the hyperplanes
/// `w_j = 0` and `y_i (w.x_i + b) = 1`, so a minimizer lies on some
/// intersection of `m + 1` of them.
pub fn l1_oracle(x: &Matrix, y: &[f64], c: f64) -> f64 {
    let n = x.rows();
    let m = x.cols();
    let dim = m + 1;
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..m {
        let mut a = vec![0.0; dim];
        a[j] = 1.0;
        planes.push((a, 0.0));
    }
    for i in 0..n {
        let mut a: Vec<f64> = (0..m).map(|t| y[i] * x.get(i, t)).collect();
        a.push(y[i]);
        planes.push((a, 1.0));
    }
    let objective = |v: &[f64]| {
        let w = &v[..m];
        w.iter().map(|t| t.abs()).sum::<f64>() + c * naive_hinge_sum(x, y, w, v[m])
    };
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..dim).collect();
    let total = planes.len();
    if total < dim {
        return best;
    }
    loop {
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (r, &p) in idx.iter().enumerate() {
            for s in 0..dim {
                a[(r, s)] = planes[p].0[s];
            }
            rhs[r] = planes[p].1;
        }
        if let Some(sol) = a.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                best = best.min(objective(sol.as_slice()));
            }
        }
        // Next combination in lexicographic order.
        let mut t = dim;
        loop {
            if t == 0 {
                return best;
            }
            t -= 1;
            if idx[t] < total - dim + t {
                idx[t] += 1;
                for u in t + 1..dim {
                    idx[u] = idx[u - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Random small SVM instance with both labels present. Every third instance
/// uses +-1 features so duplicate and degenerate columns occur.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize, case: usize) -> (Matrix, Vec<f64>, f64) {
    let n = rng.random_range(2..=max_n);
    let m = rng.random_range(1..=max_m);
    let discrete = case % 3 == 2;
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        data.push(if discrete {
            if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            rng.random_range(-2.0..2.0)
        });
    }
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let grid = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
    let c = grid[rng.random_range(0..grid.len())];
    (Matrix::from_vec(n, m, data).unwrap(), y, c)
}

pub fn rel_gap(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1e-12)
}

/// Single-stump SVM of the Step 0 derivation. Each class is represented by
/// one sample carrying the class's majority response (`I[p/t >= 1/2]`), the
/// classifier is `w = (a, -a)` on `(sigma, 1 - sigma)`, and the objective
/// `1/2 |w|^2 + C sum hinge` is minimized over `a in {-1, 0, +1}`.
pub fn step0_oracle(p: usize, t_p: usize, n: usize, t_n: usize) -> i8 {
    const C: f64 = 10.0;
    let pos_bit = 2 * p >= t_p;
    let neg_bit = 2 * n >= t_n;
    let score = |a: f64, bit: bool| if bit { a } else { -a };
    let objective = |a: f64| {
        let hinge = (1.0 - score(a, pos_bit)).max(0.0) + (1.0 + score(a, neg_bit)).max(0.0);
        a * a + C * hinge
    };
    let mut best = (0i8, f64::INFINITY);
    for a in [-1i8, 0, 1] {
        let v = objective(a as f64);
        if v < best.1 {
            best = (a, v);
        }
    }
    best.0
}

/// `sum_k theta_k I[sigma_k(x) = sigma_k(x')]` by a plain loop.
pub fn naive_kernel(x: &[f64], x2: &[f64], bank: &mbkl::mbkl::StumpBank) -> f64 {
    bank.stumps
        .iter()
        .zip(&bank.theta)
        .filter(|(s, _)| (x[s.feature] > s.threshold) == (x2[s.feature] > s.threshold))
        .map(|(_, t)| t)
        .sum()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(n, d, data).unwrap()
}

/// Kernel weights shaped like Step 1 output: mostly zero, a heavy tail of
/// positive values, and a few exact duplicates.
pub fn learned_theta(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut theta: Vec<f64> = (0..k)
        .map(|_| {
            if rng.random_bool(0.7) {
                0.0
            } else {
                let u: f64 = rng.random_range(1e-6..1.0);
                -u.ln() * rng.random_range(0.01..5.0)
            }
        })
        .collect();
    if k >= 2 && theta.iter().any(|t| *t > 0.0) {
        theta[k - 1] = theta[0];
    }
    theta
}

pub fn random_bank(rng: &mut ChaCha8Rng, data: &Matrix, k: usize) -> mbkl::mbkl::StumpBank {
    let stumps = mbkl::stumps::generate_stumps(data, k, rng.random());
    let theta = learned_theta(rng, stumps.len());
    mbkl::mbkl::StumpBank::new(stumps, theta).unwrap()
}

/// `n` histograms drawn from a symmetric Dirichlet(1) over `d` bins.
pub fn dirichlet_histograms(n: usize, d: usize, seed: u64) -> Matrix {
    use rand_distr::{Distribution, Gamma};
    let mut rng = mbkl::seed::rng(seed);
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / total));
    }
    Matrix::from_vec(n, d, data).unwrap()
}

/// Gaussian classes with shifted means; `spread` scales the overlap.
pub fn gaussian_classes(rng: &mut ChaCha8Rng, n: usize, d: usize, n_classes: usize, spread: f64) -> mbkl::data::Dataset {
    use rand_distr::{Distribution, StandardNormal};
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            data.push(centers[c][j] + spread * z);
        }
        labels.push(c);
    }
    mbkl::data::Dataset::from_parts(Matrix::from_vec(n, d, data).unwrap(), labels, n_classes).unwrap()
}

/// A model trained on random Gaussian classes whose bank still holds the
/// stumps Step 1 zeroed, together with held-out points to score.
pub fn unpruned_model(rng: &mut ChaCha8Rng) -> (mbkl::mbkl::MbklModel, Matrix) {
    use mbkl::mbkl::{BankKind, Prepared, TrainConfig};
    let n_classes = rng.random_range(2..=4);
    let d = rng.random_range(1..=6);
    let spread = rng.random_range(0.2..1.0);
    let train = gaussian_classes(rng, 30 * n_classes, d, n_classes, spread);
    let grid = [0.01, 0.1, 1.0, 10.0];
    let cfg = TrainConfig {
        initial_stumps: Some(rng.random_range(20..150)),
        c1: grid[rng.random_range(0..grid.len())],
        c2: grid[rng.random_range(0..grid.len())],
        seed: rng.random(),
        ..Default::default()
    };
    let prep = Prepared::new(&train, &cfg, true).unwrap();
    let theta = prep.learn_theta(cfg.c1, &cfg).unwrap();
    let all: Vec<usize> = (0..theta.len()).collect();
    let model = prep
        .fit_step2(BankKind::Mbkl, &all, &theta, cfg.c1, &[cfg.c2], &cfg)
        .unwrap()
        .remove(0);
    let test = random_matrix(rng, 50, d);
    let scaled: Vec<f64> = test.as_slice().iter().map(|v| 3.0 * v).collect();
    (model, Matrix::from_vec(50, d, scaled).unwrap())
}
