//! Reproducible experiments and Monte-Carlo checks of the convergence theory.
//!
//! Every experiment writes CSVs plus a `manifest.json` holding the resolved
//! configuration, the crate version and commit, wall times, and the list of
//! checks with their bounds and measured values.

mod config;
mod examples;
mod manifest;
mod theory;

pub use config::{ExperimentConfig, ProblemId, SolverSpec};
pub use examples::{
    frequency_spread_init, hybrid_example_policy, relative_gradient_variance, reproduce, Example, FREQUENCY_SCALE,
    HYBRID_SEEDS, KERNEL_LOG_ITER, SPECTRAL_SNAPSHOTS, VARIANCE_BATCHES, VARIANCE_PROBE_SIZES,
};
pub use manifest::{Manifest, COMMIT, VERSION};
pub use theory::{
    estimate_smoothness, fit_slope, hessian_norm, verify_convex_rate, verify_noise_floor_scaling,
    verify_nonconvex_stationarity, verify_strongly_convex_bound, Check, RippledQuadratic, SmoothnessEstimate,
    SyntheticProblem, Theorem, TheoryReport, NONCONVEX_START,
};
