//! Safeguarded Newton iteration on a sign-changing bracket.
//!
//! Every step either takes the Newton update, when it lands strictly inside the
//! current bracket and the previous step at least halved the residual, or falls
//! back to bisection. The bracket shrinks monotonically, so monotone inputs
//! always converge.

use alloc::format;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerance {
    /// Stop when `|residual| <= residual`.
    pub residual: f64,
    /// Stop when the bracket width falls below `relative_width * |x|`.
    pub relative_width: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            residual: 0.0,
            relative_width: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

/// Finds a zero of `eval` on `[lo, hi]`.
///
/// `eval(x)` returns the residual and its derivative. `increasing` states the
/// orientation of the residual on the bracket: negative at `lo` and positive
/// at `hi` when true, the reverse when false.
pub(crate) fn solve<F>(
    mut eval: F,
    mut lo: f64,
    mut hi: f64,
    start: Option<f64>,
    increasing: bool,
    tol: Tolerance,
) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    if !(lo < hi) {
        return Err(Error::NumericalFailure(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut x = match start {
        Some(s) if s > lo && s < hi => s,
        _ => midpoint(lo, hi),
    };
    let mut previous = f64::INFINITY;
    for _ in 0..tol.max_iter {
        let (residual, slope) = eval(x);
        if residual.is_nan() {
            return Err(Error::NumericalFailure(format!("residual is NaN at {x}")));
        }
        if residual.abs() <= tol.residual {
            return Ok(x);
        }
        if (residual < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= tol.relative_width * lo.abs().max(hi.abs()) {
            return Ok(x);
        }

        let newton = x - residual / slope;
        let progressing = residual.abs() <= 0.5 * previous.abs();
        previous = residual;
        let next = if slope != 0.0 && newton.is_finite() && newton > lo && newton < hi && progressing {
            newton
        } else {
            midpoint(lo, hi)
        };
        if next <= lo || next >= hi {
            // Adjacent floats: nothing left to split.
            return Ok(x);
        }
        x = next;
    }
    Err(Error::NumericalFailure(format!(
        "no convergence in {} iterations (bracket [{lo:e}, {hi:e}])",
        tol.max_iter
    )))
}

// Geometric midpoint when the bracket spans many orders of magnitude.
fn midpoint(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi > 16.0 * lo {
        libm::sqrt(lo) * libm::sqrt(hi)
    } else {
        lo + 0.5 * (hi - lo)
    }
}
