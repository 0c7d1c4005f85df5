//! Monte Carlo estimation of the FDR of the weighted and plain BH methods.
//!
//! Replication `r` of a scenario with seed `s` draws from the ChaCha8 stream
//! `(s, r)`. Replications are grouped into fixed chunks whose partial sums are
//! merged in chunk order, so a report depends only on the scenario and seed,
//! never on the worker count.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use wbh_core::fdr::LeaveOneOut;
use wbh_core::linalg::dot;
use wbh_core::procedure::{stepup, StepUpOutcome};
use wbh_core::Error;

use crate::error::{AppError, Result};
use crate::report::real;
use crate::scenario::{Generator, Prepared, Scenario};

/// Replications per aggregation chunk.
pub const CHUNK: u64 = 2048;

/// Runs with a larger share of failed replications fail validation.
pub const MAX_FAILURE_RATE: f64 = 1e-4;

/// Outcome of one replication for both methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    /// `R`.
    pub rejections: usize,
    /// `V`, the number of rejected true nulls.
    pub false_count: usize,
    pub true_discoveries: usize,
    /// `V / (R ∨ 1)`.
    pub fdp: f64,
    /// The leave-one-out form of the same proportion.
    pub fdp_leave_one_out: f64,
    pub plain_rejections: usize,
    pub plain_false_count: usize,
    pub plain_fdp: f64,
}

/// A prepared scenario plus the constant vectors every replication reuses.
#[derive(Debug, Clone)]
pub struct Simulation {
    prepared: Prepared,
    constants: Vec<f64>,
    plain_constants: Vec<f64>,
    nulls: Vec<usize>,
}

/// Per-thread scratch buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    noise: Vec<f64>,
    sample: Vec<f64>,
    stats: Vec<f64>,
    pvalues: Vec<f64>,
    plain_pvalues: Vec<f64>,
    beta: Vec<f64>,
}

impl Workspace {
    /// Squared statistics of the last drawn replication.
    pub fn statistics(&self) -> &[f64] {
        &self.stats
    }

    /// Transformed p-values of the weighted method for the last replication.
    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Ok(Self::from_prepared(scenario.prepare()?))
    }

    pub fn from_prepared(prepared: Prepared) -> Self {
        let constants = prepared.weighted.critical_constants();
        let plain_constants = prepared.plain.critical_constants();
        let nulls = (0..prepared.dim()).filter(|&i| prepared.is_null[i]).collect();
        Self {
            prepared,
            constants,
            plain_constants,
            nulls,
        }
    }

    pub fn prepared(&self) -> &Prepared {
        &self.prepared
    }

    pub fn scenario(&self) -> &Scenario {
        &self.prepared.scenario
    }

    pub fn critical_constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn workspace(&self) -> Workspace {
        let d = self.prepared.dim();
        let n = match &self.prepared.generator {
            Generator::Means { .. } => d,
            Generator::Regression { signal, .. } => signal.len(),
        };
        Workspace {
            noise: vec![0.0; n],
            sample: vec![0.0; n],
            stats: vec![0.0; d],
            pvalues: vec![0.0; d],
            plain_pvalues: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }

    /// Squared test statistics of replication `rep`, left in `ws.stats`.
    pub fn draw_statistics(&self, rep: u64, ws: &mut Workspace) -> Result<(), Error> {
        let mut rng = replication_rng(self.scenario().seed, rep);
        match &self.prepared.generator {
            Generator::Means { model, nu, scale_dof } => {
                model.sample_into(nu, &mut rng, &mut ws.noise, &mut ws.sample);
                match scale_dof {
                    None => {
                        for (s, z) in ws.stats.iter_mut().zip(&ws.sample) {
                            *s = z * z;
                        }
                    }
                    Some(m) => {
                        let v = ChiSquared::new(*m)
                            .map_err(|e| Error::InvalidParameter(e.to_string()))?
                            .sample(&mut rng);
                        if !(v > 0.0) {
                            return Err(Error::NumericalFailure(format!("scale variate {v} is not positive")));
                        }
                        for (s, z) in ws.stats.iter_mut().zip(&ws.sample) {
                            *s = m * z * z / v;
                        }
                    }
                }
            }
            Generator::Regression {
                design,
                signal,
                projector,
                inverse_diagonal,
                noise_sd,
            } => {
                for (y, m) in ws.sample.iter_mut().zip(signal) {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *y = m + noise_sd * e;
                }
                for (i, b) in ws.beta.iter_mut().enumerate() {
                    *b = dot(projector.row(i), &ws.sample);
                }
                let (n, d) = (design.rows(), design.cols());
                let mut rss = 0.0;
                for k in 0..n {
                    let r = ws.sample[k] - dot(design.row(k), &ws.beta);
                    rss += r * r;
                }
                let tau2 = rss / (n - d) as f64;
                if !(tau2 > 0.0) {
                    return Err(Error::DegenerateFit { tau2 });
                }
                for ((s, b), a) in ws.stats.iter_mut().zip(&ws.beta).zip(inverse_diagonal) {
                    *s = b * b / (a * tau2);
                }
            }
        }
        Ok(())
    }

    /// Draws replication `rep` and runs both methods on it.
    pub fn run_replication_with(&self, rep: u64, ws: &mut Workspace) -> Result<Replication, Error> {
        self.draw_statistics(rep, ws)?;
        let p = &self.prepared;
        p.weighted.transformed_pvalues_into(&ws.stats, &mut ws.pvalues);
        p.plain.transformed_pvalues_into(&ws.stats, &mut ws.plain_pvalues);
        let weighted = stepup(&ws.pvalues, &self.constants)?;
        let plain = stepup(&ws.plain_pvalues, &self.plain_constants)?;
        let fdp_leave_one_out = LeaveOneOut::new(&ws.pvalues, &self.constants)?.proportion(self.nulls.iter().copied());
        let (false_count, fdp) = self.false_part(&weighted);
        let (plain_false_count, plain_fdp) = self.false_part(&plain);
        Ok(Replication {
            rejections: weighted.rejections(),
            false_count,
            true_discoveries: weighted.rejections() - false_count,
            fdp,
            fdp_leave_one_out,
            plain_rejections: plain.rejections(),
            plain_false_count,
            plain_fdp,
        })
    }

    pub fn run_replication(&self, rep: u64) -> Result<Replication, Error> {
        self.run_replication_with(rep, &mut self.workspace())
    }

    fn false_part(&self, outcome: &StepUpOutcome) -> (usize, f64) {
        let v = outcome.rejected.iter().filter(|&&i| self.prepared.is_null[i]).count();
        (v, v as f64 / outcome.rejections().max(1) as f64)
    }

    /// Runs every replication on `workers` threads.
    pub fn run(&self, workers: usize) -> Result<SimulationReport> {
        let start = Instant::now();
        let reps = self.scenario().replications;
        let chunks = reps.div_ceil(CHUNK);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| AppError::Invalid(format!("cannot start worker pool: {e}")))?;
        let partials: Vec<Tally> = pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut ws = self.workspace();
                    let mut tally = Tally::default();
                    for rep in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                        match self.run_replication_with(rep, &mut ws) {
                            Ok(r) => tally.push(&r, self.prepared.alternative_count()),
                            Err(e) => tally.fail(rep, e),
                        }
                    }
                    tally
                })
                .collect()
        });
        let mut total = Tally::default();
        for t in &partials {
            total.merge(t);
        }
        Ok(self.report(total, start.elapsed()))
    }

    fn report(&self, t: Tally, wall_time: Duration) -> SimulationReport {
        let p = &self.prepared;
        let sc = self.scenario();
        let fdr = |m: &Moments, estimator| FdrEstimate {
            estimator,
            mean_fdp: m.mean(),
            std_error: m.std_error(),
            replications: m.n,
        };
        let has_alternatives = p.alternative_count() > 0;
        let failure_rate = t.failures as f64 / sc.replications as f64;
        SimulationReport {
            scenario: sc.clone(),
            digest: ScenarioDigest {
                dimension: p.dim(),
                structure: sc.structure(),
                method: sc.method_name(),
                alpha: sc.alpha,
                nulls: p.null_count(),
                replications: sc.replications,
                seed: sc.seed,
            },
            alpha1: p.weighted.alpha1(),
            direct: fdr(&t.direct, Estimator::Direct),
            leave_one_out: fdr(&t.loo, Estimator::LeaveOneOut),
            plain_bh: fdr(&t.plain, Estimator::Direct),
            power: has_alternatives.then(|| t.power.estimate()),
            plain_power: has_alternatives.then(|| t.plain_power.estimate()),
            any_rejection: t.any.estimate(),
            mean_rejections: t.rejections.mean(),
            failures: t.failures,
            first_failure: t.first_failure.map(|(rep, msg)| format!("replication {rep}: {msg}")),
            valid: failure_rate <= MAX_FAILURE_RATE && t.direct.n > 0,
            wall_time,
        }
    }
}

/// RNG of replication `rep` under base seed `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Prepares and runs a scenario.
pub fn simulate(scenario: &Scenario, workers: usize) -> Result<SimulationReport> {
    Simulation::new(scenario)?.run(workers)
}

/// FDR estimate by averaging `V / (R ∨ 1)`.
pub fn estimate_fdr_direct(scenario: &Scenario, workers: usize) -> Result<FdrEstimate> {
    Ok(simulate(scenario, workers)?.direct)
}

/// FDR estimate by averaging the leave-one-out form.
pub fn estimate_fdr_leave_one_out(scenario: &Scenario, workers: usize) -> Result<FdrEstimate> {
    Ok(simulate(scenario, workers)?.leave_one_out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdrEstimate {
    pub estimator: Estimator,
    #[serde(serialize_with = "real")]
    pub mean_fdp: f64,
    /// Sample standard deviation of the per-replication values over `√n`.
    #[serde(serialize_with = "real")]
    pub std_error: f64,
    pub replications: u64,
}

impl FdrEstimate {
    /// `mean <= level + k SE`.
    pub fn within(&self, level: f64, k: f64) -> bool {
        self.mean_fdp <= level + k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(serialize_with = "real")]
    pub mean: f64,
    #[serde(serialize_with = "real")]
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioDigest {
    pub dimension: usize,
    pub structure: String,
    pub method: String,
    #[serde(serialize_with = "real")]
    pub alpha: f64,
    pub nulls: usize,
    pub replications: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub digest: ScenarioDigest,
    #[serde(serialize_with = "real")]
    pub alpha1: f64,
    pub direct: FdrEstimate,
    pub leave_one_out: FdrEstimate,
    /// Unweighted BH on the same draws, for comparison only.
    pub plain_bh: FdrEstimate,
    /// Mean share of false nulls rejected; absent without false nulls.
    pub power: Option<Estimate>,
    pub plain_power: Option<Estimate>,
    /// Frequency of at least one rejection.
    pub any_rejection: Estimate,
    #[serde(serialize_with = "real")]
    pub mean_rejections: f64,
    pub failures: u64,
    pub first_failure: Option<String>,
    pub valid: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SimulationReport {
    /// Difference of the two FDR estimates in units of their combined SE.
    pub fn estimator_gap(&self) -> f64 {
        let se = self.direct.std_error.hypot(self.leave_one_out.std_error);
        let diff = (self.direct.mean_fdp - self.leave_one_out.mean_fdp).abs();
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Neumaier) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: Neumaier,
    sum_sq: Neumaier,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mean = self.sum.value() / n;
        let var = ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            std_error: self.std_error(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    direct: Moments,
    loo: Moments,
    plain: Moments,
    power: Moments,
    plain_power: Moments,
    any: Moments,
    rejections: Moments,
    failures: u64,
    first_failure: Option<(u64, String)>,
}

impl Tally {
    fn push(&mut self, r: &Replication, alternatives: usize) {
        self.direct.push(r.fdp);
        self.loo.push(r.fdp_leave_one_out);
        self.plain.push(r.plain_fdp);
        if alternatives > 0 {
            let a = alternatives as f64;
            self.power.push(r.true_discoveries as f64 / a);
            self.plain_power.push((r.plain_rejections - r.plain_false_count) as f64 / a);
        }
        self.any.push(if r.rejections > 0 { 1.0 } else { 0.0 });
        self.rejections.push(r.rejections as f64);
    }

    fn fail(&mut self, rep: u64, e: Error) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some((rep, e.to_string()));
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.direct.merge(&o.direct);
        self.loo.merge(&o.loo);
        self.plain.merge(&o.plain);
        self.power.merge(&o.power);
        self.plain_power.merge(&o.plain_power);
        self.any.merge(&o.any);
        self.rejections.merge(&o.rejections);
        self.failures += o.failures;
        if self.first_failure.is_none() {
            self.first_failure = o.first_failure.clone();
        }
    }
}
