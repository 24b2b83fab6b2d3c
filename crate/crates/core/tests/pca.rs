mod common;

use common::*;
use htpca_core::linalg::{sym_eigen, Matrix};
use htpca_core::pca::{
    cosine_similarity, fit_classical_pca, fit_heavy_pca, log_cost, project_reconstruct,
    residual_sq_norms, PcaModel,
};
use htpca_core::robust::EstimatorMode;
use htpca_core::sampling::{sample_superstatistical, GaussianSpec, RngSeed, Subordinator};
use htpca_core::shape::{
    build_log_lut, RatioFormula, ShapeMethod, SubordinatorLogMoments, TylerOptions,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

fn data(sigma: Matrix<f64>, sub: Subordinator, n: usize, seed: u64) -> Matrix<f64> {
    let spec = GaussianSpec::new(sigma).unwrap();
    sample_superstatistical(&spec, sub, n, RngSeed::new(seed)).unwrap()
}

fn sigma5() -> Matrix<f64> {
    Matrix::from_fn(5, 5, |i, j| if i == j { 6.0 - i as f64 } else { 0.4 / (1.0 + (i + j) as f64) })
}

#[test]
fn projection_beats_any_orthonormal_encoder_per_sample() {
    let mut r = rng(51);
    for pair in 0..100 {
        let d = r.random_range(2..=10usize);
        let m = r.random_range(1..d);
        let w = random_orthonormal(d, m, &mut r);
        let map = random_orthonormal(d, m, &mut r);
        let x = data(Matrix::identity(d), Subordinator::cauchy(), 1000, 500 + pair);
        let best = residual_sq_norms(&x, &w, &w).unwrap();
        let other = residual_sq_norms(&x, &w, &map).unwrap();
        for (j, (b, o)) in best.iter().zip(&other).enumerate() {
            assert!(o >= b, "pair {pair}, sample {j}: {o} < {b}");
        }
        assert!(log_cost(&x, &w, &map).unwrap().value >= log_cost(&x, &w, &w).unwrap().value);
    }
}

#[test]
fn projection_beats_arbitrary_encoders_too() {
    let mut r = rng(52);
    for pair in 0..100 {
        let d = r.random_range(2..=10usize);
        let m = r.random_range(1..d);
        let w = random_orthonormal(d, m, &mut r);
        let map = Matrix::from_fn(d, m, |_, _| 3.0 * r.sample::<f64, _>(StandardNormal));
        let x = data(Matrix::identity(d), Subordinator::Student { nu: 1.0 }, 1000, 700 + pair);
        let best = residual_sq_norms(&x, &w, &w).unwrap();
        let other = residual_sq_norms(&x, &w, &map).unwrap();
        assert!(best.iter().zip(&other).all(|(b, o)| o >= b), "pair {pair}");
    }
}

#[test]
fn top_eigenvectors_minimize_the_log_cost() {
    let sigma = sigma5();
    let truth = sym_eigen(&sigma).unwrap().leading_vectors(2);
    let seeds = 20;
    let mut wins = 0;
    for s in 0..seeds {
        let x = data(sigma.clone(), Subordinator::cauchy(), 10_000, 900 + s);
        let best = log_cost(&x, &truth, &truth).unwrap().value;
        let mut r = rng(1900 + s);
        let beaten = (0..200).any(|_| {
            let w = random_orthonormal(5, 2, &mut r);
            log_cost(&x, &w, &w).unwrap().value < best
        });
        wins += !beaten as usize;
    }
    assert!(wins as f64 >= 0.95 * seeds as f64, "{wins}/{seeds}");
}

#[test]
fn every_estimator_agrees_with_classical_pca_on_gaussian_data() {
    // correlations of 0.5: the log-correlation method is unreliable below 0.3
    let sd = [3.0, 2.0, 1.5, 1.0, 0.8];
    let sigma = Matrix::from_fn(5, 5, |i, j| sd[i] * sd[j] * if i == j { 1.0 } else { 0.5 });
    let sub = Subordinator::gaussian();
    let x = data(sigma, sub, 100_000, 53);
    let classical = fit_classical_pca(&x, 1).unwrap().component(0);
    let methods = vec![
        ShapeMethod::Ratio(RatioFormula::A),
        ShapeMethod::Ratio(RatioFormula::B),
        ShapeMethod::Ratio(RatioFormula::C),
        ShapeMethod::LogCorrelation {
            lut: Arc::new(build_log_lut(1e-3, 64).unwrap()),
            moments: Some(SubordinatorLogMoments::analytic(sub).unwrap()),
        },
        ShapeMethod::Gaussianize,
        ShapeMethod::Tyler(TylerOptions::default()),
    ];
    for method in methods {
        let fit = fit_heavy_pca(&x, &method, 1, EstimatorMode::Ml).unwrap();
        fit.model.check_invariants().unwrap();
        let c = cosine_similarity(&fit.model.component(0), &classical).unwrap().abs();
        assert!(c >= 0.99, "{method}: {c}");
    }
}

#[test]
fn full_rank_model_reproduces_the_data() {
    let x = data(sigma5(), Subordinator::cauchy(), 300, 54);
    let model = fit_classical_pca(&x, 5).unwrap();
    let back = project_reconstruct(&x, &model).unwrap();
    let scale = x.max_abs();
    assert!(back.sub(&x).max_abs() <= 1e-9 * scale);
}

#[test]
fn zero_data_costs_nothing() {
    let x = Matrix::<f64>::zeros(3, 10);
    let w = Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]);
    let r = log_cost(&x, &w, &w).unwrap();
    assert_eq!((r.value, r.n_used), (0.0, 10));
}

fn orthogonal(m: usize, seed: u64) -> Matrix<f64> {
    random_orthonormal(m, m, &mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000, m in 1usize..5) {
        let x = data(sigma5(), Subordinator::Stable { alpha: 1.3 }, 200, seed);
        let model = fit_classical_pca(&x, m).unwrap();
        let once = project_reconstruct(&x, &model).unwrap();
        let twice = project_reconstruct(&once, &model).unwrap();
        prop_assert!(twice.sub(&once).max_abs() <= 1e-10 * once.max_abs().max(1.0));
    }

    #[test]
    fn points_in_the_span_are_fixed(seed in 0u64..10_000, m in 1usize..5) {
        let mut r = rng(seed);
        let w = random_orthonormal(5, m, &mut r);
        let loc: Vec<f64> = (0..5).map(|_| r.sample(StandardNormal)).collect();
        let coef = Matrix::from_fn(m, 30, |_, _| r.sample::<f64, _>(StandardNormal));
        let mut x = w.matmul(&coef);
        for (i, c) in loc.iter().enumerate() {
            x.row_mut(i).iter_mut().for_each(|v| *v += c);
        }
        let model = PcaModel { components: w, eigenvalues: vec![1.0; m], location: loc };
        let back = project_reconstruct(&x, &model).unwrap();
        prop_assert!(back.sub(&x).max_abs() <= 1e-10 * x.max_abs());
    }

    #[test]
    fn log_cost_is_rotation_invariant(seed in 0u64..10_000, m in 1usize..5) {
        let x = data(sigma5(), Subordinator::cauchy(), 500, seed);
        let w = random_orthonormal(5, m, &mut rng(seed + 1));
        let wq = w.matmul(&orthogonal(m, seed + 2));
        let a = log_cost(&x, &w, &w).unwrap().value;
        let b = log_cost(&x, &wq, &wq).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn log_cost_decreases_with_more_components(seed in 0u64..10_000) {
        let x = data(sigma5(), Subordinator::cauchy(), 500, seed);
        let basis = sym_eigen(&sigma5()).unwrap();
        let costs: Vec<f64> = (1..=5)
            .map(|m| {
                let w = basis.leading_vectors(m);
                log_cost(&x, &w, &w).unwrap().value
            })
            .collect();
        for k in 1..costs.len() {
            prop_assert!(costs[k] <= costs[k - 1] + 1e-12 * costs[k - 1].abs(), "{:?}", costs);
        }
    }
}
