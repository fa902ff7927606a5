use alloc::vec::Vec;

use crate::fit::IterationRecord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("insufficient data for {what}: need at least {needed}, found {found}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        trace: Vec<IterationRecord>,
    },

    #[error("simulation would exceed the event budget of {limit} events (reached gate {gate} of {n_gates})")]
    BudgetExceeded {
        limit: usize,
        gate: u64,
        n_gates: u64,
    },

    #[error(
        "stream recorded at repetition rate {stream_hz} Hz, analysis expects {expected_hz} Hz"
    )]
    UnitMismatch { stream_hz: f64, expected_hz: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    /// True for errors caused by too little data rather than bad input.
    pub fn is_data_insufficiency(&self) -> bool {
        matches!(self, Error::InsufficientData { .. })
    }
}
