mod common;

use common::{random_covariance, regression_r2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wbh_core::corr::{equicorrelated_matrix, equicorrelated_weight};
use wbh_core::{build_model, CorrelationModel, Error, Matrix, MeanSpec};

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

#[test]
fn weights_match_least_squares_r2() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [2, 3, 5, 8, 12] {
        for _ in 0..20 {
            let sigma = random_covariance(&mut rng, d, 0.3);
            let model = build_model(&to_matrix(&sigma)).unwrap();
            for i in 0..d {
                let expected = 1.0 - regression_r2(&sigma, i);
                let got = model.weights()[i];
                assert!((got - expected).abs() < 1e-10, "d={d} i={i}: {got} vs {expected}");
            }
        }
    }
}

#[test]
fn gamma_is_symmetric_with_unit_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for d in [2, 4, 9] {
        let model = build_model(&to_matrix(&random_covariance(&mut rng, d, 0.5))).unwrap();
        let g = model.gamma();
        let p = model.precision();
        for i in 0..d {
            assert!((g[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..d {
                assert!((g[(i, j)] - g[(j, i)]).abs() < 1e-12);
                let expected = p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt();
                assert!((g[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn precision_inverts_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = build_model(&to_matrix(&random_covariance(&mut rng, 7, 0.2))).unwrap();
    let prod = model.corr().matmul(model.precision()).unwrap();
    for i in 0..7 {
        for j in 0..7 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((prod[(i, j)] - e).abs() < 1e-10);
        }
    }
}

#[test]
fn weights_ignore_scales() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let sigma = random_covariance(&mut rng, 6, 0.4);
    let scaled: Vec<Vec<f64>> = sigma
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, x)| x * (i + 1) as f64 * (j + 1) as f64).collect())
        .collect();
    let a = build_model(&to_matrix(&sigma)).unwrap();
    let b = build_model(&to_matrix(&scaled)).unwrap();
    for (x, y) in a.weights().iter().zip(b.weights()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn equicorrelated_grid() {
    for d in [2usize, 3, 5, 20] {
        for rho in [-0.1, 0.0, 0.3, 0.7, 0.9] {
            if rho <= -1.0 / (d as f64 - 1.0) {
                assert!(CorrelationModel::equicorrelated(d, rho).is_err(), "d={d} rho={rho}");
                continue;
            }
            let model = CorrelationModel::equicorrelated(d, rho).unwrap();
            let closed = equicorrelated_weight(d, rho).unwrap();
            let sigma = equicorrelated_matrix(d, rho).unwrap().to_rows();
            let oracle = 1.0 - regression_r2(&sigma, 0);
            assert!((closed - oracle).abs() < 1e-12, "d={d} rho={rho}");
            for &w in model.weights() {
                assert!((w - closed).abs() < 1e-12, "d={d} rho={rho}: {w} vs {closed}");
            }
        }
    }
    // d = 2: w = 1 - rho^2.
    assert!((equicorrelated_weight(2, 0.5).unwrap() - 0.75).abs() < 1e-15);
}

#[test]
fn equicorrelated_feasibility() {
    assert!(equicorrelated_weight(2, -0.5).is_ok());
    assert!(matches!(equicorrelated_weight(4, -0.5), Err(Error::InvalidParameter(_))));
    assert!(equicorrelated_weight(5, 1.0).is_err());
    assert!(equicorrelated_weight(1, 0.3).is_err());
}

#[test]
fn singular_matrix_names_pivot() {
    let sigma = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    match build_model(&sigma) {
        Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
        other => panic!("expected a positive-definiteness failure, got {other:?}"),
    }
}

#[test]
fn asymmetric_matrix_rejected() {
    let sigma = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
    assert!(matches!(build_model(&sigma), Err(Error::InvalidInput(_))));
}

#[test]
fn sample_moments() {
    let sigma = vec![vec![4.0, 1.2, -0.6], vec![1.2, 1.0, 0.3], vec![-0.6, 0.3, 2.25]];
    let model = build_model(&to_matrix(&sigma)).unwrap();
    let mean = MeanSpec::new(vec![2.0, 0.0, -1.5]);
    let nu = mean.standardized(&model).unwrap();
    let c = model.corr();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 400_000;
    let mut sum = [0.0; 3];
    let mut cross = [[0.0; 3]; 3];
    for _ in 0..n {
        let z = model.sample(&mean, &mut rng).unwrap();
        for i in 0..3 {
            sum[i] += z[i];
            for j in 0..3 {
                cross[i][j] += (z[i] - nu[i]) * (z[j] - nu[j]);
            }
        }
    }
    let nf = n as f64;
    for i in 0..3 {
        let se = (1.0 / nf).sqrt();
        assert!((sum[i] / nf - nu[i]).abs() < 4.5 * se, "mean {i}");
        for j in 0..3 {
            let rho = c[(i, j)];
            let se = ((1.0 + rho * rho) / nf).sqrt();
            assert!((cross[i][j] / nf - rho).abs() < 4.5 * se, "cov ({i},{j})");
        }
    }
}

#[test]
fn conditional_noncentrality_matches_regression() {
    // For a null coordinate, E[Y_i | Y_-i] = -Σ Γ_ki (Y_k - δ_k).
    let sigma = vec![vec![1.0, 0.6, 0.2], vec![0.6, 1.0, -0.3], vec![0.2, -0.3, 1.0]];
    let model = build_model(&to_matrix(&sigma)).unwrap();
    let w = model.weights();
    let y = [0.4, -1.1, 2.0];
    let delta = [0.0, 0.5, -0.2];
    // Conditional mean of Z_0 given Z_1, Z_2 by least squares on the covariance.
    let sub = vec![vec![1.0, -0.3], vec![-0.3, 1.0]];
    let coef = common::gauss_solve(&sub, &[0.6, 0.2]);
    let z_rest = [y[1] * w[1].sqrt(), y[2] * w[2].sqrt()];
    let nu_rest = [delta[1] * w[1].sqrt(), delta[2] * w[2].sqrt()];
    let cond_mean_z = coef[0] * (z_rest[0] - nu_rest[0]) + coef[1] * (z_rest[1] - nu_rest[1]);
    let expected = (cond_mean_z / w[0].sqrt()).powi(2);
    let got = model.conditional_noncentrality(0, &y[1..], &delta[1..]).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

proptest! {
    #[test]
    fn weights_in_unit_interval(seed in 0u64..10_000, d in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = build_model(&to_matrix(&random_covariance(&mut rng, d, 0.05))).unwrap();
        for &w in model.weights() {
            prop_assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn diagonal_covariance_has_unit_weights(diag in prop::collection::vec(0.01f64..100.0, 1..8)) {
        let d = diag.len();
        let sigma = Matrix::from_fn(d, d, |i, j| if i == j { diag[i] } else { 0.0 });
        let model = build_model(&sigma).unwrap();
        for &w in model.weights() {
            prop_assert_eq!(w, 1.0);
        }
    }
}
