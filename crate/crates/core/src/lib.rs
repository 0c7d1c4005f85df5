//! Weighted Benjamini–Hochberg step-up procedures for simultaneous two-sided
//! tests on the means of correlated normals.
//!
//! The weighted z-method handles a known covariance; the weighted t-method a
//! covariance known up to a scalar estimated by an independent chi-square.
//! [`varselect`] applies the t-method to regression coefficients.
//!
//! The crate is `no_std` and needs only `alloc`.

#![cfg_attr(not(test), no_std)]
// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod corr;
pub mod dist;
mod error;
pub mod fdr;
pub mod linalg;
pub mod procedure;
mod root;
mod special;
pub mod varselect;

pub use corr::{build_model, CorrelationModel, MeanSpec};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use procedure::{CalibratedMethod, MethodKind, StepUpOutcome};
pub use varselect::{OlsFit, RegressionProblem};
