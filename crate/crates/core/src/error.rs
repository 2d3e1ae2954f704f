use thiserror::Error;

use crate::second_stage::Coefficients;

pub type Result<T, E = TsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TsError {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or type invariant was violated.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Compressed data produced a zero divisor in a feature map.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("normal matrix is rank deficient; use a ridge parameter > 0")]
    RankDeficient,

    /// The minimax solver ran out of iterations before certifying its gap.
    /// The best iterate and its certificate are carried along.
    #[error("minimax solver exceeded {iterations} iterations (certificate {:.3e} > tolerance {tolerance:.3e})", best.certificate)]
    BudgetExceeded {
        iterations: usize,
        tolerance: f64,
        best: Box<Coefficients>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TsError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        TsError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        TsError::InvalidConfig(msg.into())
    }
}
