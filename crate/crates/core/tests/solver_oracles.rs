mod common;

use common::{l1_oracle, l2_oracle, random_instance, rel_gap};
use mbkl::linsvm::{decision_values, initial_objective, l1_objective, l2_objective, train_l1, train_l2, SolverConfig};
use mbkl::matrix::Matrix;
use mbkl::seed;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn l2_matches_enumeration_oracle() {
    let mut rng = seed::rng(101);
    for case in 0..60 {
        let (x, y, c) = random_instance(&mut rng, 9, 3, case);
        let model = train_l2(&x, &y, &SolverConfig::with_c(c)).unwrap();
        let oracle = l2_oracle(&x, &y, c);
        assert!(rel_gap(model.objective, oracle) <= 1e-4, "case {case}: {} vs {oracle}", model.objective);
    }
}

#[test]
fn l1_matches_vertex_oracle() {
    let mut rng = seed::rng(202);
    for case in 0..100 {
        let (x, y, c) = random_instance(&mut rng, 10, 3, case);
        let model = train_l1(&x, &y, &SolverConfig::with_c(c)).unwrap();
        let oracle = l1_oracle(&x, &y, c);
        assert!(rel_gap(model.objective, oracle) <= 1e-4, "case {case}: {} vs {oracle}", model.objective);
    }
}

#[test]
fn reported_objective_is_recomputable() {
    let mut rng = seed::rng(303);
    for case in 0..30 {
        let (x, y, c) = random_instance(&mut rng, 10, 3, case);
        let l2 = train_l2(&x, &y, &SolverConfig::with_c(c)).unwrap();
        let l1 = train_l1(&x, &y, &SolverConfig::with_c(c)).unwrap();
        assert!(rel_gap(l2.objective, l2_objective(&x, &y, &l2.weights, l2.bias, c)) <= 1e-9);
        assert!(rel_gap(l1.objective, l1_objective(&x, &y, &l1.weights, l1.bias, c)) <= 1e-9);
    }
}

#[test]
fn decision_values_match_scalar_loop() {
    let mut rng = seed::rng(404);
    let (x, y, c) = random_instance(&mut rng, 10, 3, 0);
    let model = train_l2(&x, &y, &SolverConfig::with_c(c)).unwrap();
    let scores = decision_values(&model, &x).unwrap();
    for i in 0..x.rows() {
        let mut s = model.bias;
        for j in 0..x.cols() {
            s += model.weights[j] * x.get(i, j);
        }
        assert!((scores[i] - s).abs() <= 1e-12);
    }
}

#[test]
fn l1_is_at_least_as_sparse_as_l2() {
    // One informative coordinate among noise: the LP optimum ignores the rest.
    let mut rng = seed::rng(505);
    let mut checked = 0;
    for _ in 0..20 {
        let n = 30;
        let m = 6;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut r = vec![label * rng.random_range(1.0..2.0)];
            r.extend((1..m).map(|_| rng.random_range(-0.1..0.1)));
            rows.push(r);
            y.push(label);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = SolverConfig::with_c(1.0);
        let l1 = train_l1(&x, &y, &cfg).unwrap();
        let l2 = train_l2(&x, &y, &cfg).unwrap();
        if l1.zero_fraction() > 0.0 {
            checked += 1;
        }
        assert!(l1.zero_fraction() >= l2.zero_fraction());
    }
    assert!(checked > 0, "no instance had a sparse L1 optimum");
}

#[test]
fn training_is_deterministic() {
    let mut rng = seed::rng(606);
    let (x, y, c) = random_instance(&mut rng, 10, 3, 1);
    let cfg = SolverConfig::with_c(c);
    assert_eq!(train_l1(&x, &y, &cfg).unwrap(), train_l1(&x, &y, &cfg).unwrap());
    assert_eq!(train_l2(&x, &y, &cfg).unwrap(), train_l2(&x, &y, &cfg).unwrap());
}

#[test]
fn larger_problem_converges() {
    let mut rng = seed::rng(707);
    let n = 300;
    let m = 40;
    let mut data = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let s = row[0] + row[1] - row[2] + rng.random_range(-1.0..1.0);
        y.push(if s > 0.0 { 1.0 } else { -1.0 });
        data.extend(row);
    }
    let x = Matrix::from_vec(n, m, data).unwrap();
    for c in [0.1, 10.0] {
        let cfg = SolverConfig::with_c(c);
        let l1 = train_l1(&x, &y, &cfg).unwrap();
        let l2 = train_l2(&x, &y, &cfg).unwrap();
        assert!(l1.converged && l2.converged);
        assert!(l1.objective <= initial_objective(&y, c));
        assert!(l2.objective <= initial_objective(&y, c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objectives_never_exceed_start(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..12),
        flips in prop::collection::vec(any::<bool>(), 12),
        ci in 0usize..6,
    ) {
        let n = rows.len();
        let x = Matrix::from_rows(&rows).unwrap();
        let mut y: Vec<f64> = (0..n).map(|i| if flips[i] { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let c = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0][ci];
        let start = initial_objective(&y, c);
        let cfg = SolverConfig::with_c(c);
        prop_assert!(train_l1(&x, &y, &cfg).unwrap().objective <= start * (1.0 + 1e-12));
        prop_assert!(train_l2(&x, &y, &cfg).unwrap().objective <= start * (1.0 + 1e-12));
    }
}
