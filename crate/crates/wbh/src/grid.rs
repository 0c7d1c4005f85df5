//! Scenario grids and random correlation matrices.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use wbh_core::corr::equicorrelated_weight;
use wbh_core::linalg::{dot, Matrix};
use wbh_core::Error;

use crate::error::{AppError, Result};
use crate::scenario::{CovarianceSpec, MeansSpec, MethodSpec, ModelSpec, NullSpec, Scenario, SignalSpec};

/// Cartesian grid of mean-testing scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dimensions: Vec<usize>,
    /// Equicorrelation values.
    #[serde(default)]
    pub rhos: Vec<f64>,
    /// Number of random correlation matrices per dimension.
    #[serde(default)]
    pub random_pd: usize,
    /// Fraction of true nulls; the first `round(f d)` coordinates are null.
    pub null_fractions: Vec<f64>,
    /// `μ_i = signal √σ_ii` at false nulls.
    #[serde(default = "default_signal")]
    pub signal: f64,
    pub methods: Vec<MethodSpec>,
    pub alpha: f64,
}

fn default_signal() -> f64 {
    3.0
}

/// Seed of the `index`-th scenario derived from a base seed.
pub fn scenario_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

/// Expands a grid in the order dimension, structure, null fraction, method.
///
/// Every scenario gets `replications` and its own seed derived from `base_seed`.
/// A `rho` outside the positive-definite range for some dimension is an error.
pub fn generate_scenario_grid(spec: &GridSpec, replications: u64, base_seed: u64) -> Result<Vec<Scenario>> {
    if spec.methods.is_empty() || spec.null_fractions.is_empty() || spec.dimensions.is_empty() {
        return Err(AppError::Invalid("grid needs at least one dimension, null fraction and method".into()));
    }
    if spec.rhos.is_empty() && spec.random_pd == 0 {
        return Err(AppError::Invalid("grid needs rhos or random_pd matrices".into()));
    }
    let mut out = Vec::new();
    for &d in &spec.dimensions {
        let mut structures = Vec::new();
        for &rho in &spec.rhos {
            equicorrelated_weight(d, rho)?;
            structures.push(CovarianceSpec::Equicorrelated { rho });
        }
        for k in 0..spec.random_pd {
            structures.push(CovarianceSpec::RandomPd {
                seed: scenario_seed(base_seed ^ 0x5eed_c0de, (d * 1000 + k) as u64),
                condition: 100.0,
            });
        }
        for cov in &structures {
            for &frac in &spec.null_fractions {
                if !(0.0..=1.0).contains(&frac) {
                    return Err(AppError::Invalid(format!("null fraction {frac} is not in [0, 1]")));
                }
                let nulls = (frac * d as f64).round() as usize;
                for &method in &spec.methods {
                    let index = out.len() as u64;
                    out.push(Scenario {
                        label: None,
                        model: ModelSpec::Means(MeansSpec {
                            dimension: d,
                            covariance: cov.clone(),
                            nulls: NullSpec::First(nulls),
                            signal: SignalSpec::Multiple(spec.signal),
                            method,
                        }),
                        alpha: spec.alpha,
                        replications,
                        seed: scenario_seed(base_seed, index),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Random `d x d` correlation matrix: `Q Λ Qᵀ` with `Q` Haar-distributed and
/// eigenvalues log-uniform on `[1 / condition, 1]`, rescaled to unit diagonal.
pub fn random_correlation(d: usize, condition: f64, seed: u64) -> Result<Matrix> {
    if d == 0 {
        return Err(AppError::Invalid("dimension must be at least 1".into()));
    }
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(Error::InvalidParameter(format!("condition number {condition} must be >= 1")).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(d, &mut rng);
    let log_c = condition.ln();
    let eig: Vec<f64> = (0..d).map(|_| (-rng.random::<f64>() * log_c).exp()).collect();
    let cov = Matrix::from_fn(d, d, |i, j| (0..d).map(|k| q[(i, k)] * eig[k] * q[(j, k)]).sum());
    let s: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(Matrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            cov[(a, b)] / (s[a] * s[b])
        }
    }))
}

/// Gram-Schmidt on a Gaussian matrix; columns are the orthonormal basis.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&v, c);
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    Matrix::from_fn(d, d, |i, k| cols[k][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use wbh_core::linalg::Cholesky;

    fn spec(rhos: Vec<f64>, d: usize) -> GridSpec {
        GridSpec {
            dimensions: vec![d],
            rhos,
            random_pd: 0,
            null_fractions: vec![1.0, 0.5],
            signal: 3.0,
            methods: vec![MethodSpec::Z, MethodSpec::T { m: 10.0 }],
            alpha: 0.05,
        }
    }

    #[test]
    fn negative_rho_boundary() {
        assert!(generate_scenario_grid(&spec(vec![-0.5], 2), 10, 1).is_ok());
        let err = generate_scenario_grid(&spec(vec![-0.5], 4), 10, 1).unwrap_err();
        assert!(matches!(err, AppError::Core(Error::InvalidParameter(_))));
    }

    #[test]
    fn grid_size_and_seeds() {
        let grid = generate_scenario_grid(&spec(vec![0.0, 0.3, 0.9], 20), 100, 7).unwrap();
        assert_eq!(grid.len(), 3 * 2 * 2);
        let mut seeds: Vec<u64> = grid.iter().map(|s| s.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), grid.len());
        assert_eq!(grid, generate_scenario_grid(&spec(vec![0.0, 0.3, 0.9], 20), 100, 7).unwrap());
    }

    #[test]
    fn random_correlation_is_positive_definite() {
        for seed in 0..20 {
            for d in [1, 2, 5, 12] {
                let c = random_correlation(d, 100.0, seed).unwrap();
                assert!(Cholesky::new(&c, 1e-12).is_ok());
                for i in 0..d {
                    assert_eq!(c[(i, i)], 1.0);
                    for j in 0..d {
                        assert_eq!(c[(i, j)], c[(j, i)]);
                        assert!(c[(i, j)].abs() <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn random_pd_grid() {
        let mut s = spec(vec![], 6);
        s.random_pd = 3;
        let grid = generate_scenario_grid(&s, 10, 3).unwrap();
        assert_eq!(grid.len(), 3 * 2 * 2);
        for sc in &grid {
            sc.prepare().unwrap();
        }
    }
}
