//! Centralized numerical tolerances and statistical conventions.
//!
//! Every threshold used by the experiment verdicts and the acceptance suite
//! lives here with its rationale. Statistical assertions use k standard
//! errors with k = 3 for example-level checks and k = 4 for CI gates, always
//! under fixed seeds, so the suite is deterministic.

/// Quadrature tolerance on mollifier mass: composite Simpson at 4e4 panels on
/// a smooth compactly supported kernel is exact to ~1e-12; 1e-8 leaves room
/// for the profile's boundary flatness.
pub const QUADRATURE_MASS_TOL: f64 = 1e-8;

/// Sigma multiplier for example-level Monte Carlo checks.
pub const SIGMA_EXAMPLE: f64 = 3.0;

/// Sigma multiplier for acceptance-gate Monte Carlo checks.
pub const SIGMA_GATE: f64 = 4.0;

/// L^1(K) bound on the commutator of a constant field with any catalog g.
/// The two convolutions share one quadrature stencil, so the cancellation is
/// exact up to interpolation of the cached grids.
pub const CONSTANT_COMMUTATOR_L1: f64 = 1e-6;

/// Ladder-halving factor: down an eps ladder the last norm must not exceed
/// this fraction of the first. Conservative default; overridable per config.
pub const LADDER_HALVING: f64 = 0.5;

/// Empirical strong order required of the Euler scheme residuals
/// (order 1/2 with a safety margin for finite-sample slope estimates).
pub const MIN_EMPIRICAL_ORDER: f64 = 0.45;

/// Multiplier separating a negative control from the healthy tolerance.
pub const NEGATIVE_CONTROL_FACTOR: f64 = 10.0;

/// Interpolation slack added to maximum-principle style range checks:
/// piecewise-linear evaluation can overshoot grid samples only through
/// floating-point rounding.
pub const RANGE_SLACK: f64 = 1e-9;

/// Residual floor treated as "machine precision" for exact cancellations
/// (zero initial data stays zero, constants stay constant).
pub const MACHINE_RESIDUAL: f64 = 1e-12;

/// Factor allowed between stderr scaling and the ideal M^{-1/2} law when the
/// path count quadruples.
pub const STDERR_SCALING_SLACK: f64 = 1.5;

/// Successive self-convergence error ratios for the first-order solver must
/// land in this window against a 4x-refined reference.
pub const SELF_CONVERGENCE_WINDOW: (f64, f64) = (1.5, 2.5);

/// Safety factor applied when calibrating the scheme-error budget
/// c*(dx + dt) on the zero-drift closed-form cases.
pub const SCHEME_BUDGET_SAFETY: f64 = 3.0;
