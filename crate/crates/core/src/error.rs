use thiserror::Error;

/// Errors raised by model construction and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),

    /// A pair with zero total of one good has no defined percentages.
    #[error("degenerate pool: total of good {good} is zero")]
    DegeneratePool { good: u8 },

    #[error("degenerate means: m_x = {mean_x}, m_y = {mean_y}")]
    DegenerateMeans { mean_x: f64, mean_y: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("inadmissible trade coefficients: {0}")]
    Admissibility(String),

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;
