//! Numerical laboratory for stochastic transport equations with irregular
//! drift and unbounded divergence.
//!
//! The crate builds pathwise transport solutions by stochastic
//! characteristics for mollified drift, estimates exponential-weighted means
//! by Monte Carlo, solves the matching family of parabolic equations with a
//! deterministic finite-difference scheme as the oracle, measures the
//! smoothing commutator, and runs the two-mollifier selection experiment
//! contrasting noisy and deterministic pipelines.

pub mod characteristics;
pub mod commutator;
pub mod error;
pub mod config;
pub mod expectation;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod noise;
pub mod output;
pub mod parabolic;
pub mod tolerances;

pub use error::{LabError, Result};
