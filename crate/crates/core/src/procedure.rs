//! Weighted Benjamini–Hochberg step-up testing.
//!
//! Each squared statistic `S_i` (`Z_i^2` for known scale, `T_i^2 = m Z_i^2 / V`
//! for the t-case) is divided by its weight `w_i = 1 - R_i^2` and referred to
//! the null survival function `F̄` (χ²₁ or F(1, m)). The resulting transformed
//! p-values `P̃_i = F̄(S_i / w_i) = F̄(w_i⁻¹ F̄⁻¹(P_i))` go through the step-up
//! rule with critical constants `i α₁`, where `α₁` solves
//! `Σ_i F̄(w_i F̄⁻¹(α₁)) = α`.

use alloc::vec::Vec;

use crate::corr::{build_model, CorrelationModel};
use crate::dist::{ChiSquare, FisherF, SurvivalLaw};
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::linalg::Matrix;
use crate::root::{self, Tolerance};

/// Raw p-values are clamped into `[P_FLOOR, P_CEIL]` before any inverse
/// survival transform.
pub const P_FLOOR: f64 = 1e-300;
pub const P_CEIL: f64 = 1.0 - 1e-16;

/// Largest accepted calibration residual `|Σ F̄(w_i F̄⁻¹(α₁)) - α|`.
pub const CALIBRATION_TOLERANCE: f64 = 1e-10;

const CALIBRATION_MAX_ITER: usize = 200;

/// Which two-sided test produced the statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodKind {
    /// Known covariance; null law χ²₁.
    Z,
    /// Covariance known up to scale, with an independent `V ~ τ² χ²_dof`;
    /// null law F(1, dof).
    T { dof: f64 },
}

impl MethodKind {
    pub fn null_law(&self) -> Result<NullLaw> {
        match *self {
            MethodKind::Z => Ok(NullLaw::ChiSquare(ChiSquare::new(1.0)?)),
            MethodKind::T { dof } => Ok(NullLaw::F(FisherF::new(1.0, dof)?)),
        }
    }
}

/// Null law of a squared two-sided test statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullLaw {
    ChiSquare(ChiSquare),
    F(FisherF),
}

impl SurvivalLaw for NullLaw {
    fn sf(&self, x: f64) -> f64 {
        match self {
            NullLaw::ChiSquare(law) => law.sf(x),
            NullLaw::F(law) => law.sf(x),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            NullLaw::ChiSquare(law) => law.pdf(x),
            NullLaw::F(law) => law.pdf(x),
        }
    }
}

fn check_weight(w: f64) -> Result<()> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(invalid_param!("weight {w} is not in (0, 1]"));
    }
    Ok(())
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid_param!("level {alpha} is not in (0, 1)"));
    }
    Ok(())
}

/// `P̃ = F̄(w⁻¹ F̄⁻¹(p))`. A unit weight returns `p` unchanged.
pub fn transform_pvalue(p: f64, w: f64, kind: MethodKind) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param!("p-value {p} is not in [0, 1]"));
    }
    check_weight(w)?;
    let law = kind.null_law()?;
    if w == 1.0 {
        return Ok(p);
    }
    let stat = law.isf(p.clamp(P_FLOOR, P_CEIL))?;
    Ok(law.sf(stat / w))
}

/// Solves `Σ_i F̄(w_i F̄⁻¹(α₁)) = α` for `α₁ ∈ (0, α/d]`.
pub fn calibrate_alpha1(weights: &[f64], alpha: f64, kind: MethodKind) -> Result<f64> {
    Ok(CalibratedMethod::new(weights.to_vec(), alpha, kind)?.alpha1())
}

/// A weighted BH method with its base constant solved.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedMethod {
    kind: MethodKind,
    law: NullLaw,
    weights: Vec<f64>,
    alpha: f64,
    alpha1: f64,
    residual: f64,
}

impl CalibratedMethod {
    pub fn new(weights: Vec<f64>, alpha: f64, kind: MethodKind) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid_input!("no weights given"));
        }
        for &w in &weights {
            check_weight(w)?;
        }
        check_level(alpha)?;
        let law = kind.null_law()?;
        let d = weights.len() as f64;
        let upper = alpha / d;

        let alpha1 = if weights.iter().all(|&w| w == 1.0) {
            // The condition collapses to d α₁ = α.
            upper
        } else {
            solve_alpha1(&law, &weights, alpha, upper)?
        };
        let residual = calibration_sum(&law, &weights, alpha1)? - alpha;
        if !(residual.abs() <= CALIBRATION_TOLERANCE) {
            return Err(Error::NumericalFailure(alloc::format!(
                "calibration residual {residual:e} exceeds {CALIBRATION_TOLERANCE:e}"
            )));
        }
        Ok(Self {
            kind,
            law,
            weights,
            alpha,
            alpha1,
            residual,
        })
    }

    /// Ordinary BH at level `alpha`: unit weights, `α₁ = α / d`.
    pub fn unweighted(d: usize, alpha: f64, kind: MethodKind) -> Result<Self> {
        Self::new(alloc::vec![1.0; d], alpha, kind)
    }

    /// Calibrates with the weights of a correlation model.
    pub fn for_model(model: &CorrelationModel, alpha: f64, kind: MethodKind) -> Result<Self> {
        Self::new(model.weights().to_vec(), alpha, kind)
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    pub fn law(&self) -> &NullLaw {
        &self.law
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    /// `Σ_i F̄(w_i F̄⁻¹(α₁)) - α` at the solved `α₁`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `α_i = i α₁`, `i = 1..d`.
    pub fn critical_constants(&self) -> Vec<f64> {
        (1..=self.dim()).map(|i| i as f64 * self.alpha1).collect()
    }

    /// Writes `P̃_i = F̄(S_i / w_i)` for the raw squared statistics `S_i`.
    pub fn transformed_pvalues_into(&self, squared_stats: &[f64], out: &mut [f64]) {
        for ((o, &s), &w) in out.iter_mut().zip(squared_stats).zip(&self.weights) {
            *o = self.law.sf(s / w);
        }
    }

    pub fn transformed_pvalues(&self, squared_stats: &[f64]) -> Result<Vec<f64>> {
        self.check_stats(squared_stats)?;
        let mut out = alloc::vec![0.0; self.dim()];
        self.transformed_pvalues_into(squared_stats, &mut out);
        Ok(out)
    }

    /// `S_i / w_i`: `Y_i^2` in the z-case, `m Y_i^2 / V` in the t-case.
    pub fn weighted_statistics(&self, squared_stats: &[f64]) -> Result<Vec<f64>> {
        self.check_stats(squared_stats)?;
        Ok(squared_stats.iter().zip(&self.weights).map(|(s, w)| s / w).collect())
    }

    /// Transforms raw p-values one at a time through [`transform_pvalue`].
    pub fn transform_pvalues(&self, pvalues: &[f64]) -> Result<Vec<f64>> {
        if pvalues.len() != self.dim() {
            return Err(invalid_input!("{} p-values for {} weights", pvalues.len(), self.dim()));
        }
        pvalues
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| transform_pvalue(p, w, self.kind))
            .collect()
    }

    /// Runs the full test on raw squared statistics.
    pub fn test(&self, squared_stats: &[f64]) -> Result<TestResult> {
        self.check_stats(squared_stats)?;
        let raw_pvalues: Vec<f64> = squared_stats.iter().map(|&s| self.law.sf(s)).collect();
        let transformed = self.transformed_pvalues(squared_stats)?;
        let outcome = stepup(&transformed, &self.critical_constants())?;
        Ok(TestResult {
            raw_pvalues,
            transformed_pvalues: transformed,
            outcome,
        })
    }

    fn check_stats(&self, squared_stats: &[f64]) -> Result<()> {
        if squared_stats.len() != self.dim() {
            return Err(invalid_input!(
                "{} statistics for {} weights",
                squared_stats.len(),
                self.dim()
            ));
        }
        if let Some(s) = squared_stats.iter().find(|s| !(**s >= 0.0)) {
            return Err(invalid_input!("squared statistic {s} is not >= 0"));
        }
        Ok(())
    }
}

fn calibration_sum(law: &NullLaw, weights: &[f64], a: f64) -> Result<f64> {
    let c = law.isf(a)?;
    Ok(weights.iter().map(|w| law.sf(w * c)).sum())
}

// Bisection-safeguarded Newton in ln α₁ over [ln a, ln(α/d)], where `a` is
// found by stepping down from α/d. The lower end stays where the null
// quantile is representable, which matters for heavy-tailed F laws.
fn solve_alpha1(law: &NullLaw, weights: &[f64], alpha: f64, upper: f64) -> Result<f64> {
    let mut lower = upper;
    loop {
        let total = law
            .isf(lower)
            .map(|c| weights.iter().map(|w| law.sf(w * c)).sum::<f64>())
            .map_err(|_| too_small(lower))?;
        if total < alpha {
            break;
        }
        lower *= 0.5 * alpha / total;
        if lower < P_FLOOR {
            return Err(too_small(P_FLOOR));
        }
    }
    let eval = |t: f64| {
        let a = libm::exp(t);
        let Ok(c) = law.isf(a) else {
            return (f64::NAN, f64::NAN);
        };
        let mut sum = 0.0;
        let mut slope = 0.0;
        for &w in weights {
            sum += law.sf(w * c);
            slope += w * law.pdf(w * c);
        }
        // d/dt Σ F̄(w_i c(e^t)) with dc/da = -1 / f(c)
        (sum - alpha, a * slope / law.pdf(c))
    };
    let hi = libm::log(upper);
    let t = root::solve(
        eval,
        libm::log(lower),
        hi,
        Some(hi - 0.1),
        true,
        Tolerance {
            residual: 1e-14 * alpha,
            max_iter: CALIBRATION_MAX_ITER,
            ..Tolerance::default()
        },
    )?;
    Ok(libm::exp(t).min(upper))
}

fn too_small(at: f64) -> Error {
    Error::NumericalFailure(alloc::format!(
        "calibration root lies below {at:e}; weights are too small for this null law"
    ))
}

/// Raw and transformed p-values with the step-up decision.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub raw_pvalues: Vec<f64>,
    pub transformed_pvalues: Vec<f64>,
    pub outcome: StepUpOutcome,
}

/// Result of a step-up test.
#[derive(Debug, Clone, PartialEq)]
pub struct StepUpOutcome {
    /// Indices of rejected hypotheses, ascending.
    pub rejected: Vec<usize>,
    /// The `R`-th smallest p-value; `None` when nothing is rejected.
    pub threshold: Option<f64>,
}

impl StepUpOutcome {
    pub fn none() -> Self {
        Self {
            rejected: Vec::new(),
            threshold: None,
        }
    }

    /// `R`.
    pub fn rejections(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_rejected(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }
}

/// Indices ordered by ascending value, ties by index.
pub(crate) fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Step-up test: `R = max{i : P_(i) <= α_i}`, rejecting every `H_i` with
/// `P_i <= P_(R)`.
pub fn stepup(pvalues: &[f64], constants: &[f64]) -> Result<StepUpOutcome> {
    if pvalues.len() != constants.len() {
        return Err(invalid_input!(
            "{} p-values but {} critical constants",
            pvalues.len(),
            constants.len()
        ));
    }
    if let Some(p) = pvalues.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(invalid_input!("p-value {p} is not in [0, 1]"));
    }
    if constants.windows(2).any(|w| !(w[0] <= w[1])) || constants.iter().any(|c| c.is_nan()) {
        return Err(invalid_input!("critical constants must be nondecreasing"));
    }
    let order = ascending_order(pvalues);
    let r = (1..=order.len())
        .rev()
        .find(|&i| pvalues[order[i - 1]] <= constants[i - 1]);
    Ok(match r {
        None => StepUpOutcome::none(),
        Some(r) => {
            let threshold = pvalues[order[r - 1]];
            let rejected = (0..pvalues.len()).filter(|&i| pvalues[i] <= threshold).collect();
            StepUpOutcome {
                rejected,
                threshold: Some(threshold),
            }
        }
    })
}

/// The same rule stated on the weighted squared statistics:
/// `R = min{i : S_(i) >= F̄⁻¹((d - i + 1) α₁)}` over the ascending order,
/// rejecting every `H_j` with `S_j >= S_(R)`.
///
/// The reported threshold is `F̄(S_(R))`, on the p-value scale.
pub fn statistic_space_stepup(weighted_stats: &[f64], alpha1: f64, kind: MethodKind) -> Result<StepUpOutcome> {
    if let Some(s) = weighted_stats.iter().find(|s| !(**s >= 0.0)) {
        return Err(invalid_input!("statistic {s} is not >= 0"));
    }
    let d = weighted_stats.len();
    if !(alpha1 > 0.0 && alpha1 * (d as f64) < 1.0) {
        return Err(invalid_param!("base constant {alpha1} must satisfy 0 < d * alpha1 < 1"));
    }
    let law = kind.null_law()?;
    let order = ascending_order(weighted_stats);
    for (pos, &idx) in order.iter().enumerate() {
        let i = pos + 1;
        let critical = law.isf((d - i + 1) as f64 * alpha1)?;
        if weighted_stats[idx] >= critical {
            let cut = weighted_stats[idx];
            let rejected = (0..d).filter(|&j| weighted_stats[j] >= cut).collect();
            return Ok(StepUpOutcome {
                rejected,
                threshold: Some(law.sf(cut)),
            });
        }
    }
    Ok(StepUpOutcome::none())
}

/// Global-null test: rejects iff `min_i P̃_(i) / (i α₁) <= 1`, i.e. iff the
/// step-up rule rejects at least one hypothesis.
pub fn simes_global(transformed_pvalues: &[f64], alpha1: f64) -> Result<bool> {
    if let Some(p) = transformed_pvalues.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(invalid_input!("p-value {p} is not in [0, 1]"));
    }
    if !(alpha1 > 0.0) {
        return Err(invalid_param!("base constant {alpha1} must be positive"));
    }
    let mut sorted = transformed_pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .iter()
        .enumerate()
        .any(|(k, &p)| p <= (k + 1) as f64 * alpha1))
}

/// Weighted BH on two-sided z-tests of `H_i: μ_i = 0` for `x ~ N(μ, Σ)`.
pub fn weighted_bh_z(x: &[f64], sigma: &Matrix, alpha: f64) -> Result<StepUpOutcome> {
    Ok(weighted_test_z(x, sigma, alpha)?.1.outcome)
}

/// [`weighted_bh_z`] returning the calibrated method and p-values as well.
pub fn weighted_test_z(x: &[f64], sigma: &Matrix, alpha: f64) -> Result<(CalibratedMethod, TestResult)> {
    let model = build_model(sigma)?;
    let z = model.standardize(x)?;
    let squared: Vec<f64> = z.iter().map(|z| z * z).collect();
    let method = CalibratedMethod::for_model(&model, alpha, MethodKind::Z)?;
    let result = method.test(&squared)?;
    Ok((method, result))
}

/// Weighted BH on two-sided t-tests with `x ~ N(μ, τ²Σ)` and an independent
/// `variance_stat ~ τ² χ²_dof`.
pub fn weighted_bh_t(x: &[f64], variance_stat: f64, dof: f64, sigma: &Matrix, alpha: f64) -> Result<StepUpOutcome> {
    Ok(weighted_test_t(x, variance_stat, dof, sigma, alpha)?.1.outcome)
}

/// [`weighted_bh_t`] returning the calibrated method and p-values as well.
pub fn weighted_test_t(
    x: &[f64],
    variance_stat: f64,
    dof: f64,
    sigma: &Matrix,
    alpha: f64,
) -> Result<(CalibratedMethod, TestResult)> {
    if !(variance_stat > 0.0 && variance_stat.is_finite()) {
        return Err(invalid_input!("variance statistic {variance_stat} must be positive"));
    }
    let kind = MethodKind::T { dof };
    kind.null_law()?;
    let model = build_model(sigma)?;
    let z = model.standardize(x)?;
    let squared = t_squared_from_z(&z, variance_stat, dof);
    let method = CalibratedMethod::for_model(&model, alpha, kind)?;
    let result = method.test(&squared)?;
    Ok((method, result))
}

/// `T_i^2 = m Z_i^2 / V`.
pub fn t_squared_from_z(z: &[f64], variance_stat: f64, dof: f64) -> Vec<f64> {
    z.iter().map(|z| dof * z * z / variance_stat).collect()
}
