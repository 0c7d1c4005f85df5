//! FDR-controlled variable selection in the Gaussian linear model
//! `Y = Xβ + ε`, `ε ~ N(0, τ² I)`.
//!
//! `β̂ ~ N(β, τ² A⁻¹)` with `A = XᵀX`, independent of `τ̂² ~ τ² χ²_{n-d} / (n-d)`,
//! so the coefficient tests are the t-case of the weighted procedure with
//! `m = n - d`, squared statistics `T_i² = β̂_i² / (aⁱⁱ τ̂²)` and weights
//! `w_i = 1 / (a_ii aⁱⁱ)`, the complement of the squared multiple correlation
//! between `β̂_i` and the other estimates.
//!
//! No intercept is added; include a column of ones in `X` if one is wanted.

use alloc::vec::Vec;

use crate::error::{invalid_input, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::procedure::{CalibratedMethod, MethodKind, StepUpOutcome, TestResult};

/// `τ̂²` at or below this multiple of `mean(Y²)` counts as a noiseless fit.
pub const DEGENERATE_RATIO: f64 = 1e-14;

const RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    design: Matrix,
    response: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(design: Matrix, response: Vec<f64>) -> Result<Self> {
        let (n, d) = (design.rows(), design.cols());
        if response.len() != n {
            return Err(invalid_input!("response has {} entries, design has {n} rows", response.len()));
        }
        if d == 0 {
            return Err(invalid_input!("design has no columns"));
        }
        if n <= d {
            return Err(invalid_input!("need more observations than variables, got n = {n}, d = {d}"));
        }
        if design.as_slice().iter().chain(&response).any(|x| !x.is_finite()) {
            return Err(invalid_input!("design or response contains non-finite values"));
        }
        Ok(Self { design, response })
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn observations(&self) -> usize {
        self.design.rows()
    }

    pub fn variables(&self) -> usize {
        self.design.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta_hat: Vec<f64>,
    /// Residual sum of squares over `n - d`.
    pub tau2_hat: f64,
    /// `A = XᵀX`.
    pub gram: Matrix,
    pub gram_inv: Matrix,
    /// `n - d`.
    pub dof: usize,
    /// True when `τ̂²` is zero to working precision.
    pub degenerate: bool,
}

impl OlsFit {
    /// `aⁱⁱ`, the diagonal of `A⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        self.gram_inv.diagonal()
    }
}

pub fn ols_fit(problem: &RegressionProblem) -> Result<OlsFit> {
    let x = problem.design();
    let y = problem.response();
    let (n, d) = (x.rows(), x.cols());
    let gram = x.gram();
    let chol = Cholesky::new(&gram, RANK_THRESHOLD).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, .. } => {
            invalid_input!("design is rank deficient (column {pivot} is collinear with earlier ones)")
        }
        other => other,
    })?;
    let beta_hat = chol.solve(&x.transpose_matvec(y)?)?;
    let fitted = x.matvec(&beta_hat)?;
    let rss: f64 = y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let dof = n - d;
    let tau2_hat = rss / dof as f64;
    let mean_sq = y.iter().map(|y| y * y).sum::<f64>() / n as f64;
    Ok(OlsFit {
        beta_hat,
        tau2_hat,
        gram_inv: chol.inverse(),
        gram,
        dof,
        degenerate: tau2_hat <= DEGENERATE_RATIO * mean_sq,
    })
}

/// `T_i² = β̂_i² / (aⁱⁱ τ̂²)`.
pub fn t_squared(fit: &OlsFit) -> Result<Vec<f64>> {
    if fit.degenerate {
        return Err(Error::DegenerateFit { tau2: fit.tau2_hat });
    }
    Ok(fit
        .beta_hat
        .iter()
        .zip(fit.inverse_diagonal())
        .map(|(b, aii)| b * b / (aii * fit.tau2_hat))
        .collect())
}

/// `w_i = 1 / (a_ii aⁱⁱ)`.
pub fn selection_weights(fit: &OlsFit) -> Vec<f64> {
    fit.gram
        .diagonal()
        .iter()
        .zip(fit.inverse_diagonal())
        .map(|(a, ainv)| (1.0 / (a * ainv)).min(1.0))
        .collect()
}

/// Fit, calibrated method and test result of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub fit: OlsFit,
    pub method: CalibratedMethod,
    pub result: TestResult,
}

impl Selection {
    /// Selected variable indices, ascending.
    pub fn selected(&self) -> &[usize] {
        &self.result.outcome.rejected
    }
}

pub fn select(problem: &RegressionProblem, alpha: f64) -> Result<Selection> {
    let fit = ols_fit(problem)?;
    let stats = t_squared(&fit)?;
    let kind = MethodKind::T { dof: fit.dof as f64 };
    let method = CalibratedMethod::new(selection_weights(&fit), alpha, kind)?;
    let result = method.test(&stats)?;
    Ok(Selection { fit, method, result })
}

/// Weighted BH selection at FDR level `alpha`.
pub fn select_variables(problem: &RegressionProblem, alpha: f64) -> Result<StepUpOutcome> {
    Ok(select(problem, alpha)?.result.outcome)
}
