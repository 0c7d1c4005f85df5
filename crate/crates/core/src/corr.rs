//! Covariance preprocessing.
//!
//! A [`CorrelationModel`] standardizes a covariance matrix to its correlation
//! matrix and derives everything the weighted procedures need from a single
//! Cholesky factorization: the precision diagonal, the weights
//! `w_i = 1 - R_i^2` (with `R_i^2` the squared multiple correlation of
//! coordinate `i` on the rest), the unit-diagonal matrix
//! `Γ = diag(√w) C⁻¹ diag(√w)`, and the factor used for sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// Relative asymmetry tolerated in an input covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Cholesky pivots at or below this fraction of the largest diagonal entry
/// count as a failure of positive definiteness.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CorrelationModel {
    sigma: Matrix,
    scales: Vec<f64>,
    corr: Matrix,
    precision: Matrix,
    weights: Vec<f64>,
    gamma: Matrix,
    chol: Cholesky,
}

/// Builds a [`CorrelationModel`] from a positive-definite covariance matrix.
pub fn build_model(sigma: &Matrix) -> Result<CorrelationModel> {
    CorrelationModel::new(sigma)
}

impl CorrelationModel {
    pub fn new(sigma: &Matrix) -> Result<Self> {
        if !sigma.is_square() {
            return Err(invalid_input!(
                "covariance must be square, got {}x{}",
                sigma.rows(),
                sigma.cols()
            ));
        }
        let d = sigma.rows();
        if d == 0 {
            return Err(invalid_input!("covariance matrix is empty"));
        }
        if let Some(pos) = sigma.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(invalid_input!(
                "covariance entry ({}, {}) is not finite",
                pos / d,
                pos % d
            ));
        }
        for i in 0..d {
            let v = sigma[(i, i)];
            if !(v > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: v });
            }
        }
        let scales: Vec<f64> = sigma.diagonal().into_iter().map(libm::sqrt).collect();
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOLERANCE * scales[i] * scales[j] {
                    return Err(invalid_input!(
                        "covariance is not symmetric at ({i}, {j}): {a} vs {b}"
                    ));
                }
            }
        }

        let corr = Matrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                0.5 * (sigma[(i, j)] + sigma[(j, i)]) / (scales[i] * scales[j])
            }
        });
        let chol = Cholesky::new(&corr, PIVOT_THRESHOLD)?;
        let precision = chol.inverse();
        // A correlation matrix has precision diagonal >= 1; rounding can put it a hair below.
        let weights: Vec<f64> = precision.diagonal().iter().map(|p| (1.0 / p).min(1.0)).collect();
        let roots: Vec<f64> = weights.iter().map(|w| libm::sqrt(*w)).collect();
        let gamma = Matrix::from_fn(d, d, |i, j| roots[i] * precision[(i, j)] * roots[j]);

        Ok(Self {
            sigma: sigma.clone(),
            scales,
            corr,
            precision,
            weights,
            gamma,
            chol,
        })
    }

    /// Model for the equicorrelated matrix `(1 - rho) I + rho 11ᵀ`.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        Self::new(&equicorrelated_matrix(d, rho)?)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// `√σ_ii`, the per-coordinate standardization scales.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn corr(&self) -> &Matrix {
        &self.corr
    }

    /// Inverse of the correlation matrix.
    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn precision_diag(&self) -> Vec<f64> {
        self.precision.diagonal()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `Z_i = x_i / √σ_ii`.
    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len("observation", x.len(), self.dim())?;
        Ok(x.iter().zip(&self.scales).map(|(x, s)| x / s).collect())
    }

    /// Noncentrality of the conditional law of `Y_i^2` given the remaining
    /// coordinates: `(γ_{-i,i}ᵀ (y_rest - delta_rest))^2`, where `γ_{-i,i}` is
    /// column `i` of `Γ` without its diagonal entry.
    pub fn conditional_noncentrality(&self, i: usize, y_rest: &[f64], delta_rest: &[f64]) -> Result<f64> {
        let d = self.dim();
        if i >= d {
            return Err(invalid_input!("index {i} out of range for dimension {d}"));
        }
        self.check_len("y_rest", y_rest.len(), d - 1)?;
        self.check_len("delta_rest", delta_rest.len(), d - 1)?;
        let inner: f64 = (0..d)
            .filter(|&k| k != i)
            .zip(y_rest.iter().zip(delta_rest))
            .map(|(k, (y, delta))| self.gamma[(k, i)] * (y - delta))
            .sum();
        Ok(inner * inner)
    }

    /// One draw of `Z ~ N_d(ν, C)` where `ν_i = μ_i / √σ_ii` and `C` is the
    /// correlation matrix.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &MeanSpec, rng: &mut R) -> Result<Vec<f64>> {
        let nu = mean.standardized(self)?;
        let mut scratch = vec![0.0; self.dim()];
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&nu, rng, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free variant of [`sample`](Self::sample) taking the
    /// standardized mean directly. All slices must have length `dim()`.
    pub fn sample_into<R: Rng + ?Sized>(&self, nu: &[f64], rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        for z in scratch.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        self.chol.lower_mul(scratch, out);
        for (o, m) in out.iter_mut().zip(nu) {
            *o += m;
        }
    }

    fn check_len(&self, what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(invalid_input!("{what} has length {got}, expected {want}"));
        }
        Ok(())
    }
}

/// Mean vector `μ` of the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSpec {
    mu: Vec<f64>,
}

impl MeanSpec {
    pub fn new(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn zeros(d: usize) -> Self {
        Self { mu: vec![0.0; d] }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `ν_i = μ_i / √σ_ii`.
    pub fn standardized(&self, model: &CorrelationModel) -> Result<Vec<f64>> {
        model.standardize(&self.mu)
    }

    /// `δ_i = μ_i / √(σ_ii (1 - R_i^2))`, the mean of `Y_i = Z_i / √w_i`.
    pub fn delta(&self, model: &CorrelationModel) -> Result<Vec<f64>> {
        let nu = self.standardized(model)?;
        Ok(nu.iter().zip(model.weights()).map(|(n, w)| n / libm::sqrt(*w)).collect())
    }
}

fn check_equicorrelation(d: usize, rho: f64) -> Result<()> {
    if d < 2 {
        return Err(invalid_param!("equicorrelated model needs d >= 2, got {d}"));
    }
    let lower = -1.0 / (d as f64 - 1.0);
    if !(rho > lower && rho < 1.0) {
        return Err(invalid_param!(
            "rho = {rho} is outside the positive-definite range ({lower}, 1) for d = {d}"
        ));
    }
    Ok(())
}

/// Common weight `1 - R^2 = (1 - rho)(1 + (d-1) rho) / (1 + (d-2) rho)` of the
/// equicorrelated model.
pub fn equicorrelated_weight(d: usize, rho: f64) -> Result<f64> {
    check_equicorrelation(d, rho)?;
    let d = d as f64;
    Ok((1.0 - rho) * (1.0 + (d - 1.0) * rho) / (1.0 + (d - 2.0) * rho))
}

/// `(1 - rho) I + rho 11ᵀ`.
pub fn equicorrelated_matrix(d: usize, rho: f64) -> Result<Matrix> {
    check_equicorrelation(d, rho)?;
    Ok(Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_by_two(rho: f64) -> Matrix {
        Matrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()
    }

    #[test]
    fn identity_has_unit_weights() {
        for d in [1, 2, 7] {
            let m = build_model(&Matrix::identity(d)).unwrap();
            assert!(m.weights().iter().all(|&w| w == 1.0));
            assert_eq!(m.gamma(), &Matrix::identity(d));
        }
    }

    #[test]
    fn two_by_two_weights() {
        let m = build_model(&two_by_two(0.5)).unwrap();
        for &w in m.weights() {
            assert!((w - 0.75).abs() < 1e-15);
        }
        // Γ off-diagonal: √w · (-ρ / (1 - ρ²)) · √w = -ρ
        assert!((m.gamma()[(0, 1)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn standardizes_general_covariance() {
        let sigma = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let m = build_model(&sigma).unwrap();
        assert!((m.corr()[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((m.weights()[0] - 0.75).abs() < 1e-15);
        assert_eq!(m.standardize(&[2.0, 3.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(build_model(&asym), Err(Error::InvalidInput(_))));
        let not_pd = two_by_two(1.0);
        assert!(matches!(build_model(&not_pd), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
        let neg_diag = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(build_model(&neg_diag), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
        let rect = Matrix::zeros(2, 3);
        assert!(build_model(&rect).is_err());
    }

    #[test]
    fn tiny_asymmetry_is_averaged() {
        let s = Matrix::from_rows(&[vec![1.0, 0.3 + 1e-12], vec![0.3, 1.0]]).unwrap();
        let m = build_model(&s).unwrap();
        assert_eq!(m.corr()[(0, 1)], m.corr()[(1, 0)]);
    }

    #[test]
    fn equicorrelated_closed_form() {
        assert_eq!(equicorrelated_weight(6, 0.0).unwrap(), 1.0);
        assert!((equicorrelated_weight(2, 0.5).unwrap() - 0.75).abs() < 1e-15);
        let w = equicorrelated_weight(5, -0.2).unwrap();
        assert!(w > 0.0);
        let m = CorrelationModel::equicorrelated(5, -0.2).unwrap();
        for &mw in m.weights() {
            assert!((mw - w).abs() < 1e-12);
        }
        assert!(equicorrelated_weight(4, -0.5).is_err());
        assert!(equicorrelated_weight(2, -0.5).is_ok());
        assert!(equicorrelated_weight(3, 1.0).is_err());
        assert!(equicorrelated_weight(1, 0.1).is_err());
    }

    #[test]
    fn noncentrality_cases() {
        let m = build_model(&two_by_two(0.5)).unwrap();
        assert_eq!(m.conditional_noncentrality(0, &[1.3], &[1.3]).unwrap(), 0.0);
        // γ_21 = -0.5 from the 2x2 Γ above.
        let lam = m.conditional_noncentrality(1, &[2.0], &[0.4]).unwrap();
        assert!((lam - (-0.5f64 * 1.6).powi(2)).abs() < 1e-14);

        let diag = build_model(&Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(diag.conditional_noncentrality(0, &[5.0], &[0.0]).unwrap(), 0.0);

        assert!(m.conditional_noncentrality(2, &[0.0], &[0.0]).is_err());
        assert!(m.conditional_noncentrality(0, &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = CorrelationModel::equicorrelated(4, 0.3).unwrap();
        let mean = MeanSpec::new(vec![1.0, 0.0, -1.0, 2.0]);
        let a = m.sample(&mean, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = m.sample(&mean, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delta_scales_by_weight() {
        let m = build_model(&two_by_two(0.5)).unwrap();
        let delta = MeanSpec::new(vec![3.0, 0.0]).delta(&m).unwrap();
        assert!((delta[0] - 3.0 / 0.75f64.sqrt()).abs() < 1e-14);
        assert_eq!(delta[1], 0.0);
    }
}
