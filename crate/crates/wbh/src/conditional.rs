//! Empirical check of the conditional law of a null coordinate.
//!
//! For `μ_i = 0`, `Y_i^2 = Z_i^2 / w_i` given the other coordinates is
//! noncentral chi-square with one degree of freedom and noncentrality
//! `λ_i(Y_-i)`. Draws are binned by `λ_i`; within each bin the observed
//! frequency of `Y_i^2 >= t` is compared with the mean of `sf(t; 1, λ_i)` over
//! the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wbh_core::dist::nc_chi2_sf;
use wbh_core::{CorrelationModel, MeanSpec};

use crate::error::{AppError, Result};
use crate::report::real;

/// Bins with fewer draws are merged into a neighbour.
pub const MIN_BIN_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCheck {
    #[serde(serialize_with = "real")]
    pub lambda_low: f64,
    #[serde(serialize_with = "real")]
    pub lambda_high: f64,
    pub draws: usize,
    #[serde(serialize_with = "real")]
    pub threshold: f64,
    #[serde(serialize_with = "real")]
    pub observed: f64,
    #[serde(serialize_with = "real")]
    pub expected: f64,
    #[serde(serialize_with = "real")]
    pub std_error: f64,
    /// `(observed - expected) / std_error`, zero when both agree exactly.
    #[serde(serialize_with = "real")]
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCheck {
    pub coordinate: usize,
    pub draws: usize,
    pub bins: Vec<BinCheck>,
    #[serde(serialize_with = "real")]
    pub max_deviation: f64,
    #[serde(serialize_with = "real")]
    pub max_abs_z: f64,
    pub warnings: Vec<String>,
}

/// Simulates `draws` vectors from `N(μ, Σ)` and checks coordinate `i`.
pub fn conditional_law_check(
    model: &CorrelationModel,
    mean: &MeanSpec,
    i: usize,
    draws: usize,
    bins: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<ConditionalCheck> {
    let d = model.dim();
    if i >= d {
        return Err(AppError::Invalid(format!("coordinate {i} out of range for dimension {d}")));
    }
    if mean.mu().len() != d {
        return Err(AppError::Invalid(format!("mean has length {}, dimension is {d}", mean.mu().len())));
    }
    if mean.mu()[i] != 0.0 {
        return Err(AppError::Invalid(format!("coordinate {i} has nonzero mean")));
    }
    if draws == 0 || bins == 0 {
        return Err(AppError::Invalid("need at least one draw and one bin".into()));
    }
    let delta = mean.delta(model)?;
    let delta_rest: Vec<f64> = (0..d).filter(|&k| k != i).map(|k| delta[k]).collect();
    let nu = mean.standardized(model)?;
    let w = model.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut rest = vec![0.0; d - 1];
    // (λ, Y_i^2) per draw.
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(draws);
    for _ in 0..draws {
        model.sample_into(&nu, &mut rng, &mut scratch, &mut z);
        for (r, k) in rest.iter_mut().zip((0..d).filter(|&k| k != i)) {
            *r = z[k] / w[k].sqrt();
        }
        let lambda = model.conditional_noncentrality(i, &rest, &delta_rest)?;
        samples.push((lambda, z[i] * z[i] / w[i]));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut warnings = Vec::new();
    let mut bin_count = bins.min(draws);
    if draws / bin_count < MIN_BIN_DRAWS {
        let widened = (draws / MIN_BIN_DRAWS).max(1);
        warnings.push(format!(
            "{draws} draws give fewer than {MIN_BIN_DRAWS} per bin over {bin_count} bins; widened to {widened} bins"
        ));
        bin_count = widened;
    }

    let mut out = Vec::new();
    for b in 0..bin_count {
        let lo = b * draws / bin_count;
        let hi = (b + 1) * draws / bin_count;
        let bin = &samples[lo..hi];
        let n = bin.len() as f64;
        for &t in thresholds {
            let mut hits = 0usize;
            let mut expected = 0.0;
            let mut var = 0.0;
            for &(lambda, y2) in bin {
                hits += (y2 >= t) as usize;
                let p = nc_chi2_sf(t, 1.0, lambda)?;
                expected += p;
                var += p * (1.0 - p);
            }
            let observed = hits as f64 / n;
            expected /= n;
            let std_error = var.sqrt() / n;
            let gap = observed - expected;
            let z = if std_error > 0.0 {
                gap / std_error
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            out.push(BinCheck {
                lambda_low: bin[0].0,
                lambda_high: bin[bin.len() - 1].0,
                draws: bin.len(),
                threshold: t,
                observed,
                expected,
                std_error,
                z,
            });
        }
    }
    let max_deviation = out.iter().map(|b| (b.observed - b.expected).abs()).fold(0.0, f64::max);
    let max_abs_z = out.iter().map(|b| b.z.abs()).fold(0.0, f64::max);
    Ok(ConditionalCheck {
        coordinate: i,
        draws,
        bins: out,
        max_deviation,
        max_abs_z,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use wbh_core::Matrix;

    const THRESHOLDS: [f64; 3] = [0.455, 2.706, 3.841];

    #[test]
    fn independent_coordinates_are_central() {
        let model = CorrelationModel::new(&Matrix::identity(3)).unwrap();
        let mean = MeanSpec::new(vec![0.0, 2.0, -1.0]);
        let check = conditional_law_check(&model, &mean, 0, 50_000, 5, &THRESHOLDS, 1).unwrap();
        for b in &check.bins {
            assert_eq!(b.lambda_high, 0.0);
            assert!(b.z.abs() < 4.0, "{b:?}");
        }
    }

    #[test]
    fn zero_threshold_always_exceeded() {
        let model = CorrelationModel::equicorrelated(2, 0.8).unwrap();
        let check = conditional_law_check(&model, &MeanSpec::zeros(2), 1, 5000, 5, &[0.0], 2).unwrap();
        for b in &check.bins {
            assert_eq!(b.observed, 1.0);
            assert_eq!(b.expected, 1.0);
            assert_eq!(b.z, 0.0);
        }
    }

    #[test]
    fn too_few_draws_widen_bins() {
        let model = CorrelationModel::equicorrelated(2, 0.5).unwrap();
        let check = conditional_law_check(&model, &MeanSpec::zeros(2), 0, 3000, 10, &[1.0], 3).unwrap();
        assert_eq!(check.bins.len(), 3);
        assert_eq!(check.warnings.len(), 1);
    }

    #[test]
    fn nonzero_mean_rejected() {
        let model = CorrelationModel::equicorrelated(2, 0.5).unwrap();
        let mean = MeanSpec::new(vec![1.0, 0.0]);
        assert!(conditional_law_check(&model, &mean, 0, 100, 1, &[1.0], 0).is_err());
    }
}
