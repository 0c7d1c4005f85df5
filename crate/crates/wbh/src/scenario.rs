//! Scenario descriptions for the simulation engine, and their preparation
//! into the matrices and calibrated methods a replication needs.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use wbh_core::corr::{equicorrelated_matrix, CorrelationModel};
use wbh_core::linalg::{Cholesky, Matrix};
use wbh_core::procedure::{CalibratedMethod, MethodKind};
use wbh_core::varselect::{ols_fit, selection_weights, RegressionProblem};
use wbh_core::MeanSpec;

use crate::error::{AppError, Result};
use crate::grid::random_correlation;

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub model: ModelSpec,
    pub alpha: f64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_replications() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `X ~ N_d(μ, Σ)`, testing `μ_i = 0`.
    Means(MeansSpec),
    /// `Y = Xβ + ε` with a fixed design, testing `β_i = 0`.
    Regression(RegressionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeansSpec {
    pub dimension: usize,
    pub covariance: CovarianceSpec,
    pub nulls: NullSpec,
    #[serde(default)]
    pub signal: SignalSpec,
    pub method: MethodSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Explicit { matrix: Vec<Vec<f64>> },
    Equicorrelated { rho: f64 },
    /// Block-diagonal with `blocks` equal equicorrelated blocks.
    BlockEquicorrelated { blocks: usize, rho: f64 },
    /// Random correlation matrix: random orthogonal basis, log-uniform
    /// eigenvalues spanning `condition`, rescaled to unit diagonal.
    RandomPd {
        seed: u64,
        #[serde(default = "default_condition")]
        condition: f64,
    },
}

fn default_condition() -> f64 {
    100.0
}

impl CovarianceSpec {
    pub fn build(&self, d: usize) -> Result<Matrix> {
        match self {
            CovarianceSpec::Explicit { matrix } => {
                if matrix.len() != d {
                    return Err(AppError::Invalid(format!(
                        "explicit covariance has {} rows, dimension is {d}",
                        matrix.len()
                    )));
                }
                Ok(Matrix::from_rows(matrix)?)
            }
            CovarianceSpec::Equicorrelated { rho } => Ok(equicorrelated_matrix(d, *rho)?),
            CovarianceSpec::BlockEquicorrelated { blocks, rho } => {
                if *blocks == 0 || d % blocks != 0 {
                    return Err(AppError::Invalid(format!("{blocks} blocks do not divide dimension {d}")));
                }
                let size = d / blocks;
                let block = equicorrelated_matrix(size, *rho)?;
                Ok(Matrix::from_fn(d, d, |i, j| {
                    if i / size == j / size {
                        block[(i % size, j % size)]
                    } else {
                        0.0
                    }
                }))
            }
            CovarianceSpec::RandomPd { seed, condition } => Ok(random_correlation(d, *condition, *seed)?),
        }
    }
}

impl fmt::Display for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceSpec::Explicit { .. } => write!(f, "explicit"),
            CovarianceSpec::Equicorrelated { rho } => write!(f, "rho={rho}"),
            CovarianceSpec::BlockEquicorrelated { blocks, rho } => write!(f, "blocks={blocks},rho={rho}"),
            CovarianceSpec::RandomPd { seed, condition } => write!(f, "random-pd(seed={seed},cond={condition})"),
        }
    }
}

/// Which hypotheses are true nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSpec {
    All,
    None,
    /// Coordinates `0..count`.
    First(usize),
    Indices(Vec<usize>),
}

impl NullSpec {
    pub fn mask(&self, d: usize) -> Result<Vec<bool>> {
        let mut mask = vec![false; d];
        match self {
            NullSpec::All => mask.fill(true),
            NullSpec::None => {}
            NullSpec::First(count) => {
                if *count > d {
                    return Err(AppError::Invalid(format!("{count} nulls in dimension {d}")));
                }
                mask[..*count].fill(true);
            }
            NullSpec::Indices(idx) => {
                for &i in idx {
                    if i >= d {
                        return Err(AppError::Invalid(format!("null index {i} out of range for dimension {d}")));
                    }
                    mask[i] = true;
                }
            }
        }
        Ok(mask)
    }
}

/// Means of the false nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpec {
    /// `μ_i = c √σ_ii`.
    Multiple(f64),
    /// Explicit `μ_i`; entries at true nulls are ignored.
    Values(Vec<f64>),
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec::Multiple(3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Z,
    T { m: f64 },
}

impl MethodSpec {
    pub fn kind(self) -> MethodKind {
        match self {
            MethodSpec::Z => MethodKind::Z,
            MethodSpec::T { m } => MethodKind::T { dof: m },
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Z => write!(f, "z"),
            MethodSpec::T { m } => write!(f, "t(m={m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub observations: usize,
    pub design: DesignSpec,
    /// `β`; zero entries are the true nulls.
    pub coefficients: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Rows drawn once from `N_d(0, (1 - rho) I + rho 11ᵀ)`.
    Random { rho: f64, seed: u64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

impl DesignSpec {
    pub fn build(&self, n: usize, d: usize) -> Result<Matrix> {
        match self {
            DesignSpec::Random { rho, seed } => {
                let chol = if d == 1 {
                    Cholesky::new(&Matrix::identity(1), 0.0)?
                } else {
                    Cholesky::new(&equicorrelated_matrix(d, *rho)?, 0.0)?
                };
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut data = Vec::with_capacity(n * d);
                let mut e = vec![0.0; d];
                let mut row = vec![0.0; d];
                for _ in 0..n {
                    for v in e.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    chol.lower_mul(&e, &mut row);
                    data.extend_from_slice(&row);
                }
                Ok(Matrix::from_row_major(n, d, data)?)
            }
            DesignSpec::Explicit { matrix } => {
                let x = Matrix::from_rows(matrix)?;
                if x.rows() != n || x.cols() != d {
                    return Err(AppError::Invalid(format!(
                        "explicit design is {}x{}, expected {n}x{d}",
                        x.rows(),
                        x.cols()
                    )));
                }
                Ok(x)
            }
        }
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignSpec::Random { rho, seed } => write!(f, "design-rho={rho}(seed={seed})"),
            DesignSpec::Explicit { .. } => write!(f, "design=explicit"),
        }
    }
}

impl Scenario {
    pub fn dimension(&self) -> usize {
        match &self.model {
            ModelSpec::Means(m) => m.dimension,
            ModelSpec::Regression(r) => r.coefficients.len(),
        }
    }

    /// Short description of the dependence structure.
    pub fn structure(&self) -> String {
        match &self.model {
            ModelSpec::Means(m) => m.covariance.to_string(),
            ModelSpec::Regression(r) => format!("n={},{}", r.observations, r.design),
        }
    }

    pub fn method_name(&self) -> String {
        match &self.model {
            ModelSpec::Means(m) => m.method.to_string(),
            ModelSpec::Regression(r) => format!("t(m={})", r.observations.saturating_sub(r.coefficients.len())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(AppError::Invalid("replication count must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::Invalid(format!("alpha = {} is not in (0, 1)", self.alpha)));
        }
        if self.dimension() == 0 {
            return Err(AppError::Invalid("dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Builds the fixed parts of every replication.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        match &self.model {
            ModelSpec::Means(spec) => prepare_means(self, spec),
            ModelSpec::Regression(spec) => prepare_regression(self, spec),
        }
    }
}

/// Data-generating model of a prepared scenario.
#[derive(Debug, Clone)]
pub enum Generator {
    Means {
        model: CorrelationModel,
        /// Standardized means `μ_i / √σ_ii`.
        nu: Vec<f64>,
        /// Degrees of freedom of the independent scale variate in the t-case.
        scale_dof: Option<f64>,
    },
    Regression {
        design: Matrix,
        /// `Xβ`.
        signal: Vec<f64>,
        /// `A⁻¹Xᵀ`, `d x n`.
        projector: Matrix,
        /// `aⁱⁱ`.
        inverse_diagonal: Vec<f64>,
        noise_sd: f64,
    },
}

/// A scenario with covariance factored and both methods calibrated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub generator: Generator,
    pub weighted: CalibratedMethod,
    pub plain: CalibratedMethod,
    pub is_null: Vec<bool>,
}

impl Prepared {
    pub fn dim(&self) -> usize {
        self.is_null.len()
    }

    pub fn null_count(&self) -> usize {
        self.is_null.iter().filter(|&&n| n).count()
    }

    pub fn alternative_count(&self) -> usize {
        self.dim() - self.null_count()
    }
}

fn prepare_means(scenario: &Scenario, spec: &MeansSpec) -> Result<Prepared> {
    let d = spec.dimension;
    let sigma = if d == 1 {
        match &spec.covariance {
            CovarianceSpec::Explicit { .. } => spec.covariance.build(1)?,
            _ => Matrix::identity(1),
        }
    } else {
        spec.covariance.build(d)?
    };
    let model = CorrelationModel::new(&sigma)?;
    let is_null = spec.nulls.mask(d)?;
    let mu: Vec<f64> = match &spec.signal {
        SignalSpec::Multiple(c) => (0..d)
            .map(|i| if is_null[i] { 0.0 } else { c * model.scales()[i] })
            .collect(),
        SignalSpec::Values(v) => {
            if v.len() != d {
                return Err(AppError::Invalid(format!("{} signal values for dimension {d}", v.len())));
            }
            (0..d).map(|i| if is_null[i] { 0.0 } else { v[i] }).collect()
        }
    };
    let nu = MeanSpec::new(mu).standardized(&model)?;
    let kind = spec.method.kind();
    let weighted = CalibratedMethod::for_model(&model, scenario.alpha, kind)?;
    let plain = CalibratedMethod::unweighted(d, scenario.alpha, kind)?;
    let scale_dof = match spec.method {
        MethodSpec::Z => None,
        MethodSpec::T { m } => Some(m),
    };
    Ok(Prepared {
        scenario: scenario.clone(),
        generator: Generator::Means { model, nu, scale_dof },
        weighted,
        plain,
        is_null,
    })
}

fn prepare_regression(scenario: &Scenario, spec: &RegressionSpec) -> Result<Prepared> {
    let d = spec.coefficients.len();
    let n = spec.observations;
    if !(spec.noise_sd > 0.0 && spec.noise_sd.is_finite()) {
        return Err(AppError::Invalid(format!("noise_sd = {} must be positive", spec.noise_sd)));
    }
    let design = spec.design.build(n, d)?;
    // Any response works for the design-only quantities.
    let fit = ols_fit(&RegressionProblem::new(design.clone(), vec![1.0; n])?)?;
    let projector = fit.gram_inv.matmul(&design.transpose())?;
    let weights = selection_weights(&fit);
    let kind = MethodKind::T { dof: fit.dof as f64 };
    let weighted = CalibratedMethod::new(weights, scenario.alpha, kind)?;
    let plain = CalibratedMethod::unweighted(d, scenario.alpha, kind)?;
    let signal = design.matvec(&spec.coefficients)?;
    Ok(Prepared {
        scenario: scenario.clone(),
        generator: Generator::Regression {
            signal,
            projector,
            inverse_diagonal: fit.inverse_diagonal(),
            noise_sd: spec.noise_sd,
            design,
        },
        weighted,
        plain,
        is_null: spec.coefficients.iter().map(|&b| b == 0.0).collect(),
    })
}
