//! Simulation harness, file formats and command-line front end for the
//! weighted BH procedures in [`wbh_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditional;
mod error;
pub mod grid;
pub mod io;
pub mod report;
pub mod scenario;
pub mod sim;

pub use error::{AppError, Result};
