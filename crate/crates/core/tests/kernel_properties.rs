mod common;

use common::{dirichlet_histograms, naive_kernel, random_bank, random_matrix};
use mbkl::kernel::{chi2_distance, distance_correlation_report, gram_matrix, mbk_kernel, sqrt_theta_map, uniform_bank, GRAM_LIMIT};
use mbkl::matrix::dot;
use mbkl::seed;
use mbkl::stumps::evaluate_bank;
use rand::Rng;

#[test]
fn kernel_agrees_with_loop_and_map() {
    let mut rng = seed::rng(11);
    for _ in 0..200 {
        let d = rng.random_range(1..20);
        let data = random_matrix(&mut rng, 10, d);
        let n_stumps = rng.random_range(1..300);
        let bank = random_bank(&mut rng, &data, n_stumps);
        let (i, j) = (rng.random_range(0..10), rng.random_range(0..10));
        let k = mbk_kernel(data.row(i), data.row(j), &bank).unwrap();
        let via_map = dot(&sqrt_theta_map(data.row(i), &bank).unwrap(), &sqrt_theta_map(data.row(j), &bank).unwrap());
        let naive = naive_kernel(data.row(i), data.row(j), &bank);
        let scale = bank.theta_l1().max(1e-300);
        assert!((k - naive).abs() <= 1e-9 * scale, "{k} vs {naive}");
        assert!((k - via_map).abs() <= 1e-9 * scale, "{k} vs {via_map}");
    }
}

#[test]
fn map_has_squared_norm_theta_l1() {
    let mut rng = seed::rng(12);
    let data = random_matrix(&mut rng, 20, 5);
    let bank = random_bank(&mut rng, &data, 500);
    for row in data.iter_rows() {
        let m = sqrt_theta_map(row, &bank).unwrap();
        assert!((dot(&m, &m) - bank.theta_l1()).abs() <= 1e-9 * bank.theta_l1());
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut rng = seed::rng(13);
    for _ in 0..10 {
        let n = rng.random_range(2..120);
        let d = rng.random_range(1..8);
        let data = random_matrix(&mut rng, n, d);
        let bank = random_bank(&mut rng, &data, 400);
        let g = gram_matrix(&data, &bank, GRAM_LIMIT).unwrap();
        assert!(g.min_eigenvalue() >= -1e-8 * g.trace(), "{} vs {}", g.min_eigenvalue(), g.trace());
    }
}

#[test]
fn unit_weight_distance_counts_disagreements() {
    let mut rng = seed::rng(14);
    let data = random_matrix(&mut rng, 30, 4);
    let bank = uniform_bank(&data, 257, 3);
    let bits = evaluate_bank(&bank.stumps, &data).unwrap();
    for _ in 0..50 {
        let (i, j) = (rng.random_range(0..30), rng.random_range(0..30));
        let differ = (0..bank.len()).filter(|&k| bits.get(k, i) != bits.get(k, j)).count();
        let dist = 1.0 - mbk_kernel(data.row(i), data.row(j), &bank).unwrap() / bank.len() as f64;
        assert!((dist - differ as f64 / bank.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn chi2_is_symmetric_and_matches_loop() {
    let h = dirichlet_histograms(20, 16, 5);
    for i in 0..20 {
        for j in 0..20 {
            let (a, b) = (h.row(i), h.row(j));
            let mut naive = 0.0;
            for t in 0..16 {
                if a[t] + b[t] > 0.0 {
                    naive += 0.5 * (a[t] - b[t]).powi(2) / (a[t] + b[t]);
                }
            }
            let d = chi2_distance(a, b).unwrap();
            assert_eq!(d, chi2_distance(b, a).unwrap());
            assert!((d - naive).abs() < 1e-12);
        }
        assert_eq!(chi2_distance(h.row(i), h.row(i)).unwrap(), 0.0);
    }
}

#[test]
fn histogram_distances_correlate() {
    let h = dirichlet_histograms(60, 16, 6);
    let r = distance_correlation_report(&h, 5000, 2, 1000).unwrap();
    assert!(r.sampled);
    assert_eq!(r.pairs.len(), 1000);
    assert!(r.pearson.unwrap() > 0.7, "{:?}", r.pearson);
    let again = distance_correlation_report(&h, 5000, 2, 1000).unwrap();
    assert_eq!(r.pairs, again.pairs);
}
