mod common;

use common::{gaussian_classes, step0_oracle, unpruned_model};
use mbkl::mbkl::{
    step0_counts, step0_sign, train, BankKind, Model, Prepared, Step0Mode, TrainConfig,
};
use mbkl::seed;
use mbkl::stumps::BitMatrix;
use rand::Rng;

fn random_counts(rng: &mut impl Rng) -> (usize, usize, usize, usize) {
    // Even totals make the 1/2 boundary reachable.
    let t_p = rng.random_range(1..=40) * if rng.random_bool(0.5) { 2 } else { 1 };
    let t_n = rng.random_range(1..=40) * if rng.random_bool(0.5) { 2 } else { 1 };
    (rng.random_range(0..=t_p), t_p, rng.random_range(0..=t_n), t_n)
}

#[test]
fn majority_signs_match_single_stump_svm() {
    let mut rng = seed::rng(21);
    for _ in 0..2000 {
        let (p, t_p, n, t_n) = random_counts(&mut rng);
        assert_eq!(step0_sign(p, t_p, n, t_n, Step0Mode::Majority), step0_oracle(p, t_p, n, t_n), "{p}/{t_p} {n}/{t_n}");
    }
}

/// Class-balanced hinge loss of every individual sample, minimized over
/// `a in {-1, 0, +1}` with a vanishing weight penalty.
fn balanced_oracle(p: usize, t_p: usize, n: usize, t_n: usize) -> i8 {
    let groups = [
        (p, 1.0, true, t_p),
        (t_p - p, 1.0, false, t_p),
        (n, -1.0, true, t_n),
        (t_n - n, -1.0, false, t_n),
    ];
    let objective = |a: f64| {
        let mut total = 1e-9 * a * a;
        for &(count, y, bit, class_size) in &groups {
            let score = if bit { a } else { -a };
            total += count as f64 * (1.0 - y * score).max(0.0) / class_size as f64;
        }
        total
    };
    [-1i8, 0, 1]
        .into_iter()
        .min_by(|a, b| objective(*a as f64).total_cmp(&objective(*b as f64)))
        .unwrap()
}

#[test]
fn hinge_signs_match_balanced_oracle() {
    let mut rng = seed::rng(22);
    for _ in 0..2000 {
        let (p, t_p, n, t_n) = random_counts(&mut rng);
        assert_eq!(step0_sign(p, t_p, n, t_n, Step0Mode::Hinge), balanced_oracle(p, t_p, n, t_n));
    }
}

#[test]
fn verbatim_is_majority_negated() {
    let mut rng = seed::rng(23);
    for _ in 0..500 {
        let (p, t_p, n, t_n) = random_counts(&mut rng);
        assert_eq!(
            step0_sign(p, t_p, n, t_n, Step0Mode::Verbatim),
            -step0_sign(p, t_p, n, t_n, Step0Mode::Majority)
        );
    }
}

#[test]
fn counts_match_scalar_loop() {
    let mut rng = seed::rng(24);
    for _ in 0..20 {
        let mut bits = BitMatrix::zeros(200, 50);
        for k in 0..200 {
            for j in 0..50 {
                bits.set(k, j, rng.random_bool(0.4));
            }
        }
        let labels: Vec<usize> = (0..50).map(|j| if j < 3 { j } else { rng.random_range(0..3) }).collect();
        let class = rng.random_range(0..3);
        let (counts, t_p, t_n) = step0_counts(&bits, &labels, class).unwrap();
        assert_eq!(t_p + t_n, 50);
        for (k, &(p, n)) in counts.iter().enumerate() {
            let p_loop = (0..50).filter(|&j| labels[j] == class && bits.get(k, j)).count();
            let n_loop = (0..50).filter(|&j| labels[j] != class && bits.get(k, j)).count();
            assert_eq!((p, n), (p_loop, n_loop));
        }
    }
}

#[test]
fn pruned_models_predict_identically() {
    let mut rng = seed::rng(25);
    for _ in 0..20 {
        let (model, test) = unpruned_model(&mut rng);
        let pruned = model.pruned();
        assert!(pruned.bank.theta.iter().all(|&t| t > 0.0));
        for row in test.iter_rows() {
            let a = model.predict(row).unwrap();
            let b = pruned.predict(row).unwrap();
            assert_eq!(a.class, b.class);
            assert_eq!(a.scores, b.scores);
        }
    }
}

#[test]
fn kernel_weights_are_shared_and_nonnegative() {
    let mut rng = seed::rng(26);
    let ds = gaussian_classes(&mut rng, 90, 4, 3, 0.5);
    let cfg = TrainConfig {
        initial_stumps: Some(300),
        seed: 3,
        ..Default::default()
    };
    let prep = Prepared::new(&ds, &cfg, true).unwrap();
    for c1 in [0.01, 1.0, 100.0] {
        assert!(prep.learn_theta(c1, &cfg).unwrap().iter().all(|&t| t >= 0.0));
    }
    let (model, _) = train(&ds, &cfg).unwrap();
    assert!(model.bank.theta.iter().all(|&t| t > 0.0));
    assert_eq!(model.weights.len(), 3);
    assert!(model.weights.iter().all(|w| w.len() == 2 * model.bank.len()));
}

#[test]
fn uniform_theta_scale_keeps_hard_margin_predictions() {
    let mut rng = seed::rng(27);
    let ds = gaussian_classes(&mut rng, 60, 2, 2, 0.05);
    let cfg = TrainConfig {
        initial_stumps: Some(200),
        seed: 8,
        ..Default::default()
    };
    let prep = Prepared::new(&ds, &cfg, true).unwrap();
    let theta = prep.learn_theta(1.0, &cfg).unwrap();
    let active: Vec<usize> = (0..theta.len()).filter(|&k| theta[k] > 0.0).collect();
    let base: Vec<f64> = active.iter().map(|&k| theta[k]).collect();
    let test = common::random_matrix(&mut rng, 200, 2);
    let predict = |gamma: f64| {
        let scaled: Vec<f64> = base.iter().map(|t| gamma * t).collect();
        let model = prep.fit_step2(BankKind::Mbkl, &active, &scaled, 1.0, &[1e6], &cfg).unwrap().remove(0);
        model.predict_matrix(&test).unwrap()
    };
    let reference = predict(1.0);
    for gamma in [0.5, 4.0] {
        assert_eq!(predict(gamma), reference);
    }
}

#[test]
fn seeded_training_is_byte_identical() {
    let mut rng = seed::rng(28);
    let ds = gaussian_classes(&mut rng, 80, 5, 2, 0.8);
    let cfg = TrainConfig {
        initial_stumps: Some(500),
        seed: 17,
        ..Default::default()
    };
    let bytes = || Model::Bank(train(&ds, &cfg).unwrap().0).to_bytes();
    assert_eq!(bytes(), bytes());
    let other = TrainConfig { seed: 18, ..cfg.clone() };
    assert_ne!(bytes(), Model::Bank(train(&ds, &other).unwrap().0).to_bytes());
}
