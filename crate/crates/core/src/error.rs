//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Timestep outside `1..=total_steps`.
    #[error("timestep {t} out of range 1..={max}")]
    StepOutOfRange { t: usize, max: usize },

    /// A parameter violated its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Sequence failed vocabulary validation.
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    /// Denoiser emitted a row that is not a probability distribution.
    #[error("denoiser output invalid at position {position}: {reason}")]
    InvalidDistribution { position: usize, reason: String },

    /// An operation that needs masked positions received none.
    #[error("no masked positions: {0}")]
    NoMaskedPositions(String),

    /// A statistic is undefined on the given data (single class, constant
    /// feature, empty input, ...).
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    /// Enumeration or oracle state space exceeds the configured bound.
    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),

    /// Malformed or unreadable data record.
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
