//! Survival functions and their inverses for the central chi-square, the
//! noncentral chi-square and the central F laws, plus the ratio diagnostics
//! whose monotonicity underpins the FDR guarantees of the weighted procedures.

use crate::error::{invalid_param, Result};
use crate::root::{self, Tolerance};
use crate::special::{beta_reg, gamma_pq, ln_beta, ln_gamma};

/// Smallest tail probability accepted by the inverse survival functions.
pub const MIN_TAIL: f64 = 1e-300;

/// Truncation bound on the neglected Poisson mass in the noncentral series.
const POISSON_TAIL: f64 = 1e-14;

/// A continuous law on `[0, inf)` described by its survival function and density.
pub trait SurvivalLaw {
    /// `Pr[X >= x]`; equals 1 for `x <= 0`.
    fn sf(&self, x: f64) -> f64;

    fn pdf(&self, x: f64) -> f64;

    /// Solves `sf(x) = u` for `u` in `[MIN_TAIL, 1)`.
    fn isf(&self, u: f64) -> Result<f64> {
        check_tail(u)?;
        invert_sf(|x| self.sf(x), |x| self.pdf(x), u)
    }
}

fn check_tail(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid_param!("tail probability {u} is not in (0, 1)"));
    }
    if u < MIN_TAIL {
        return Err(invalid_param!("tail probability {u:e} is below {MIN_TAIL:e}"));
    }
    Ok(())
}

fn check_dof(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid_param!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

fn check_point(x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(invalid_param!("evaluation point {x} must be nonnegative"));
    }
    Ok(())
}

fn invert_sf(sf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, u: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let s = sf(hi);
        if s == u {
            return Ok(hi);
        }
        if s < u {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(crate::Error::NumericalFailure(alloc::format!(
                "could not bracket the {u:e} quantile"
            )));
        }
    }
    let target = libm::log(u);
    // Residual in log space keeps the relative error in `u` uniform over both tails.
    root::solve(
        |x| {
            let s = sf(x);
            (libm::log(s) - target, -pdf(x) / s)
        },
        lo,
        hi,
        None,
        false,
        Tolerance {
            residual: 1e-14,
            ..Tolerance::default()
        },
    )
}

/// Central chi-square with `dof` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    dof: f64,
}

impl ChiSquare {
    pub fn new(dof: f64) -> Result<Self> {
        check_dof("degrees of freedom", dof)?;
        Ok(Self { dof })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }
}

impl SurvivalLaw for ChiSquare {
    fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if self.dof == 1.0 {
            libm::erfc(libm::sqrt(0.5 * x))
        } else if self.dof == 2.0 {
            libm::exp(-0.5 * x)
        } else {
            gamma_pq(0.5 * self.dof, 0.5 * x).1
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        let k = 0.5 * self.dof;
        if x <= 0.0 {
            return if k < 1.0 {
                f64::INFINITY
            } else if k == 1.0 {
                0.5
            } else {
                0.0
            };
        }
        libm::exp((k - 1.0) * libm::log(x) - 0.5 * x - k * core::f64::consts::LN_2 - ln_gamma(k))
    }
}

/// Noncentral chi-square, evaluated as a Poisson(`noncentrality / 2`) mixture
/// of central chi-squares with `dof + 2j` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChiSquare {
    dof: f64,
    noncentrality: f64,
}

impl NoncentralChiSquare {
    pub fn new(dof: f64, noncentrality: f64) -> Result<Self> {
        check_dof("degrees of freedom", dof)?;
        if !(noncentrality >= 0.0 && noncentrality.is_finite()) {
            return Err(invalid_param!("noncentrality must be finite and >= 0, got {noncentrality}"));
        }
        Ok(Self { dof, noncentrality })
    }

    /// `Pr[X >= x]`.
    ///
    /// Terms are accumulated outward from the Poisson mode until the collected
    /// mass exceeds `1 - 1e-14`, which keeps every weight representable even
    /// for large noncentrality.
    pub fn sf(&self, x: f64) -> f64 {
        if self.noncentrality == 0.0 {
            return ChiSquare { dof: self.dof }.sf(x);
        }
        if x <= 0.0 {
            return 1.0;
        }
        let mean = 0.5 * self.noncentrality;
        let ln_mean = libm::log(mean);
        let pmf = |j: f64| libm::exp(-mean + j * ln_mean - ln_gamma(j + 1.0));
        let term = |j: f64| ChiSquare { dof: self.dof + 2.0 * j }.sf(x);

        let mode = libm::floor(mean);
        let mut mass = pmf(mode);
        let mut total = mass * term(mode);
        let mut up = mode + 1.0;
        let mut down = mode - 1.0;
        let mut p_up = pmf(up);
        let mut p_down = if down >= 0.0 { pmf(down) } else { 0.0 };
        while mass < 1.0 - POISSON_TAIL {
            if p_up == 0.0 && p_down == 0.0 {
                break;
            }
            if p_up >= p_down {
                mass += p_up;
                total += p_up * term(up);
                up += 1.0;
                p_up = pmf(up);
            } else {
                mass += p_down;
                total += p_down * term(down);
                down -= 1.0;
                p_down = if down >= 0.0 { pmf(down) } else { 0.0 };
            }
        }
        total.min(1.0)
    }
}

/// Central F with `num_dof` and `den_dof` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherF {
    num_dof: f64,
    den_dof: f64,
}

impl FisherF {
    pub fn new(num_dof: f64, den_dof: f64) -> Result<Self> {
        check_dof("numerator degrees of freedom", num_dof)?;
        check_dof("denominator degrees of freedom", den_dof)?;
        Ok(Self { num_dof, den_dof })
    }

    pub fn num_dof(&self) -> f64 {
        self.num_dof
    }

    pub fn den_dof(&self) -> f64 {
        self.den_dof
    }
}

impl SurvivalLaw for FisherF {
    fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x.is_infinite() {
            return 0.0;
        }
        let (m, n) = (self.num_dof, self.den_dof);
        let denom = n + m * x;
        beta_reg(0.5 * n, 0.5 * m, n / denom, m * x / denom).0
    }

    fn pdf(&self, x: f64) -> f64 {
        let (m, n) = (self.num_dof, self.den_dof);
        if x <= 0.0 {
            return if m < 2.0 {
                f64::INFINITY
            } else if m == 2.0 {
                1.0
            } else {
                0.0
            };
        }
        let ln = 0.5 * m * libm::log(m / n) + (0.5 * m - 1.0) * libm::log(x)
            - 0.5 * (m + n) * libm::log1p(m * x / n)
            - ln_beta(0.5 * m, 0.5 * n);
        libm::exp(ln)
    }
}

/// Upper tail of the central chi-square law.
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    check_point(x)?;
    Ok(ChiSquare::new(dof)?.sf(x))
}

/// Inverse of [`chi2_sf`].
pub fn chi2_isf(u: f64, dof: f64) -> Result<f64> {
    ChiSquare::new(dof)?.isf(u)
}

/// Upper tail of the noncentral chi-square law.
pub fn nc_chi2_sf(x: f64, dof: f64, noncentrality: f64) -> Result<f64> {
    check_point(x)?;
    Ok(NoncentralChiSquare::new(dof, noncentrality)?.sf(x))
}

/// Upper tail of the central F law.
pub fn f_sf(x: f64, num_dof: f64, den_dof: f64) -> Result<f64> {
    check_point(x)?;
    Ok(FisherF::new(num_dof, den_dof)?.sf(x))
}

/// Inverse of [`f_sf`].
pub fn f_isf(u: f64, num_dof: f64, den_dof: f64) -> Result<f64> {
    FisherF::new(num_dof, den_dof)?.isf(u)
}

/// `Pr[X'(dof, lambda) >= q] / u` where `q` is the central upper-`u` quantile.
///
/// Nonincreasing in `u` for every fixed `dof` and `lambda`.
pub fn noncentral_exceedance_ratio(u: f64, dof: f64, noncentrality: f64) -> Result<f64> {
    let threshold = chi2_isf(u, dof)?;
    Ok(nc_chi2_sf(threshold, dof, noncentrality)? / u)
}

/// `Pr[U_{m+h} >= q] / u` where `U_k = chi2_k / (chi2_n / n)` and `q` is the
/// upper-`u` quantile of `U_m`; nonincreasing in `u`.
///
/// `U_k` is the chi-square ratio *without* the `1/k` numerator scaling of the
/// F law (`U_k = k F_{k,n}`). This is the law produced by mixing
/// `sf_{1+2J}(V q / m)` over an independent `V ~ chi2_m`. With the scaled F law
/// in the numerator the ratio is not monotone (its numerator tail is lighter).
pub fn mixed_dof_exceedance_ratio(u: f64, num_dof: f64, den_dof: f64, extra_dof: f64) -> Result<f64> {
    check_dof("extra degrees of freedom", extra_dof)?;
    let threshold = num_dof * f_isf(u, num_dof, den_dof)?;
    let wider = num_dof + extra_dof;
    Ok(f_sf(threshold / wider, wider, den_dof)? / u)
}

/// `sf_n(theta * w) / sf_n(theta * w_prime)` for `0 < w <= w_prime`;
/// nondecreasing in `theta`.
pub fn scaled_tail_ratio(theta: f64, w: f64, w_prime: f64, dof: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid_param!("theta must be positive, got {theta}"));
    }
    if !(w > 0.0 && w <= w_prime && w_prime.is_finite()) {
        return Err(invalid_param!("need 0 < w <= w', got w = {w}, w' = {w_prime}"));
    }
    let law = ChiSquare::new(dof)?;
    Ok(law.sf(theta * w) / law.sf(theta * w_prime))
}
