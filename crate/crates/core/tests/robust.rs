mod common;

use common::*;
use htpca_core::linalg::Matrix;
use htpca_core::robust::{cauchy_fit, location_vector, marginal_scale, marginal_scales, EstimatorMode};
use htpca_core::sampling::{
    sample_standard_stable, sample_superstatistical, GaussianSpec, RngSeed, StableParams,
    Subordinator,
};
use htpca_core::Error;
use proptest::prelude::*;

const N: usize = 100_000;

fn cauchy(mu: f64, gamma: f64, n: usize, seed: u64) -> Vec<f64> {
    let p = StableParams::new(1.0, 0.0, gamma, mu).unwrap();
    sample_standard_stable(p, n, RngSeed::new(seed)).unwrap()
}

#[test]
fn ml_recovers_shifted_cauchy() {
    let x = cauchy(3.0, 2.0, N, 21);
    let fit = cauchy_fit(&x, EstimatorMode::Ml).unwrap();
    assert!(!fit.ml_fallback);
    assert!((2.98..=3.02).contains(&fit.params.mu), "{:?}", fit.params);
    assert!((1.98..=2.02).contains(&fit.params.gamma), "{:?}", fit.params);
}

#[test]
fn both_modes_are_consistent_across_seeds() {
    for mode in [EstimatorMode::Quantile, EstimatorMode::Ml] {
        let good = (0..50)
            .filter(|&s| {
                let p = cauchy_fit(&cauchy(0.0, 1.0, N, 1000 + s), mode).unwrap().params;
                p.mu.abs() < 0.02 && (p.gamma - 1.0).abs() < 0.02
            })
            .count();
        assert!(good >= 48, "{mode}: {good}/50");
    }
}

#[test]
fn scale_ratio_tracks_sigma_ratio() {
    let spec = GaussianSpec::new(sweep_sigma(0.5)).unwrap();
    let x = sample_superstatistical(&spec, Subordinator::cauchy(), N, RngSeed::new(22)).unwrap();
    for mode in [EstimatorMode::Quantile, EstimatorMode::Ml] {
        let s = marginal_scales(&x, mode).unwrap();
        let r = s[0] / s[1];
        assert!((r - 2.0).abs() < 0.06, "{mode}: {r}");
    }
}

#[test]
fn gaussian_half_iqr_constant() {
    let z = normals(N, 23);
    let s = marginal_scale(&z, EstimatorMode::Quantile).unwrap();
    assert!((s - 0.674_489_75).abs() < 0.02 * 0.674_489_75, "{s}");
}

#[test]
fn scale_is_exactly_equivariant_for_seven() {
    let x = cauchy(0.0, 1.0, 1000, 24);
    let y: Vec<f64> = x.iter().map(|v| 7.0 * v).collect();
    let s = marginal_scale(&x, EstimatorMode::Quantile).unwrap();
    // equal up to the rounding of 7·x and of the quantile interpolation
    let t = marginal_scale(&y, EstimatorMode::Quantile).unwrap();
    assert!((t - 7.0 * s).abs() <= 4.0 * f64::EPSILON * t, "{t} vs {}", 7.0 * s);
    let s = marginal_scale(&x, EstimatorMode::Ml).unwrap();
    let t = marginal_scale(&y, EstimatorMode::Ml).unwrap();
    assert!((t / (7.0 * s) - 1.0).abs() < 1e-8);
}

#[test]
fn location_vector_recovers_constants() {
    let n = 20_000;
    let consts = [-3.0, 0.5, 12.0];
    let rows: Vec<Vec<f64>> = consts
        .iter()
        .enumerate()
        .map(|(i, c)| cauchy(0.0, 1.0, n, 30 + i as u64).into_iter().map(|v| v + c).collect())
        .collect();
    let x = Matrix::from_rows(&rows);
    for mode in [EstimatorMode::Quantile, EstimatorMode::Ml] {
        let loc = location_vector(&x, mode).unwrap();
        for (l, c) in loc.iter().zip(consts) {
            assert!((l - c).abs() < 3.0 / (n as f64).sqrt(), "{mode}: {l} vs {c}");
        }
    }
}

#[test]
fn location_of_gaussian_rows() {
    let n = 20_000;
    let x = Matrix::from_rows(&[normals(n, 40).into_iter().map(|z| 5.0 + z).collect::<Vec<_>>()]);
    let loc = location_vector(&x, EstimatorMode::Quantile).unwrap();
    assert!((loc[0] - 5.0).abs() < 3.0 / (n as f64).sqrt());
}

#[test]
fn zero_matrix_is_degenerate() {
    let x = Matrix::<f64>::zeros(2, 20);
    for mode in [EstimatorMode::Quantile, EstimatorMode::Ml] {
        assert!(matches!(cauchy_fit(x.row(0), mode), Err(Error::DegenerateSample(20))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affine_equivariance(a in prop_oneof![-50.0..-0.05f64, 0.05..50.0f64], b in -100.0..100.0f64, seed in 0u64..1000) {
        let x = cauchy(0.3, 1.5, 200, seed);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let q = cauchy_fit(&x, EstimatorMode::Quantile).unwrap().params;
        let qy = cauchy_fit(&y, EstimatorMode::Quantile).unwrap().params;
        let tol = 1e-12 * (1.0 + b.abs() + a.abs() * (q.mu.abs() + q.gamma));
        prop_assert!((qy.mu - (a * q.mu + b)).abs() <= tol);
        prop_assert!((qy.gamma - a.abs() * q.gamma).abs() <= 1e-12 * a.abs() * q.gamma);
        let m = cauchy_fit(&x, EstimatorMode::Ml).unwrap().params;
        let my = cauchy_fit(&y, EstimatorMode::Ml).unwrap().params;
        prop_assert!((my.mu - (a * m.mu + b)).abs() <= 1e-8 * (1.0 + (a * m.mu + b).abs() + a.abs() * m.gamma));
        prop_assert!((my.gamma / (a.abs() * m.gamma) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn ml_likelihood_beats_quantile_start(seed in 0u64..10_000, n in 8usize..300) {
        let x = cauchy(-1.0, 0.7, n, seed);
        let q = cauchy_fit(&x, EstimatorMode::Quantile).unwrap().params;
        let m = cauchy_fit(&x, EstimatorMode::Ml).unwrap().params;
        prop_assert!(m.log_likelihood(&x) >= q.log_likelihood(&x));
    }
}
