//! Per-realization false discovery proportion, computed two ways.
//!
//! The direct form is `V / (R ∨ 1)`. The leave-one-out form is
//! `Σ_{i ∈ I₀} 1(P_i <= α_{R₋ᵢ+1}) / (R₋ᵢ + 1)`, where `R₋ᵢ` is the step-up
//! count on the other `d - 1` p-values against the shifted constants
//! `α_2, ..., α_d`. For a step-up rule the two agree on every realization:
//! a rejected null has `R₋ᵢ = R - 1` and a retained one has a zero indicator.

use alloc::vec::Vec;

use crate::error::{invalid_input, Result};
use crate::procedure::{ascending_order, StepUpOutcome};

/// `V / (R ∨ 1)` with `V` the number of rejected indices flagged in `is_null`.
pub fn false_discovery_proportion(outcome: &StepUpOutcome, is_null: &[bool]) -> f64 {
    let false_count = false_rejections(outcome, is_null);
    false_count as f64 / outcome.rejections().max(1) as f64
}

/// `V`, the number of true nulls among the rejections.
pub fn false_rejections(outcome: &StepUpOutcome, is_null: &[bool]) -> usize {
    outcome
        .rejected
        .iter()
        .filter(|&&i| is_null.get(i).copied().unwrap_or(false))
        .count()
}

/// One summand of the leave-one-out form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaveOneOutTerm {
    pub index: usize,
    /// `R₋ᵢ`.
    pub reduced_count: usize,
    /// `1(P_i <= α_{R₋ᵢ+1})`.
    pub indicator: bool,
}

impl LeaveOneOutTerm {
    pub fn value(&self) -> f64 {
        if self.indicator {
            1.0 / (self.reduced_count + 1) as f64
        } else {
            0.0
        }
    }
}

/// Evaluates leave-one-out terms for one vector of p-values, sorting once.
#[derive(Debug, Clone)]
pub struct LeaveOneOut<'a> {
    pvalues: &'a [f64],
    constants: &'a [f64],
    order: Vec<usize>,
}

impl<'a> LeaveOneOut<'a> {
    pub fn new(pvalues: &'a [f64], constants: &'a [f64]) -> Result<Self> {
        if pvalues.len() != constants.len() {
            return Err(invalid_input!(
                "{} p-values but {} critical constants",
                pvalues.len(),
                constants.len()
            ));
        }
        if pvalues.iter().any(|p| p.is_nan()) {
            return Err(invalid_input!("p-values contain NaN"));
        }
        Ok(Self {
            pvalues,
            constants,
            order: ascending_order(pvalues),
        })
    }

    pub fn term(&self, i: usize) -> LeaveOneOutTerm {
        // `j` runs over positions in the reduced vector, 1-based; compare with α_{j+1}.
        let mut reduced_count = 0;
        let mut j = 0;
        for &k in &self.order {
            if k == i {
                continue;
            }
            j += 1;
            if self.pvalues[k] <= self.constants[j] {
                reduced_count = j;
            }
        }
        LeaveOneOutTerm {
            index: i,
            reduced_count,
            indicator: self.pvalues[i] <= self.constants[reduced_count],
        }
    }

    pub fn terms(&self, indices: impl IntoIterator<Item = usize>) -> Vec<LeaveOneOutTerm> {
        indices.into_iter().map(|i| self.term(i)).collect()
    }

    /// `Σ_{i ∈ nulls}` of the term values.
    pub fn proportion(&self, nulls: impl IntoIterator<Item = usize>) -> f64 {
        nulls.into_iter().map(|i| self.term(i).value()).sum()
    }
}

/// Leave-one-out form of the false discovery proportion.
pub fn leave_one_out_proportion(pvalues: &[f64], constants: &[f64], nulls: &[usize]) -> Result<f64> {
    if let Some(&i) = nulls.iter().find(|&&i| i >= pvalues.len()) {
        return Err(invalid_input!("null index {i} out of range"));
    }
    Ok(LeaveOneOut::new(pvalues, constants)?.proportion(nulls.iter().copied()))
}
