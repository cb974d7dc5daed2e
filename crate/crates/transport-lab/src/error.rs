//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// A field evaluated to a non-finite value inside its domain box.
    #[error("invalid field: {0}")]
    InvalidField(String),

    /// Mollifier width must be positive and resolved by the grid.
    #[error("invalid mollifier: {0}")]
    InvalidMollifier(String),

    /// Mollifier width is below what the evaluation grid can resolve.
    #[error("unresolved mollifier: width {eps} below grid resolution {resolution}")]
    UnresolvedMollifier { eps: f64, resolution: f64 },

    /// Two grid-indexed objects do not share the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The lattice map lost monotonicity (d=1) or injectivity (d=2).
    #[error("non-invertible flow: {0}")]
    NonInvertibleFlow(String),

    /// Explicit-scheme stability bound violated; the solver refuses to run.
    #[error("unstable config: {0}")]
    UnstableConfig(String),

    /// Monte Carlo estimator asked to run with too few samples.
    #[error("insufficient samples: got {got}, need at least {min}")]
    InsufficientSamples { got: usize, min: usize },

    /// Test function support escapes the domain box.
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    /// Experiment or CLI configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
