//! Where the collocation points come from and how much each one counts.
//!
//! Residual-driven densities with importance weighting, power-law point
//! weights, GradNorm loss balancing, stratified and spatially spread
//! mini-batches, and small dense bilevel hypergradients.

mod batching;
mod bilevel;
mod density;
mod poisson;
mod weights;

pub use batching::{cell_assignment, largest_remainder_counts, spatial_diverse_batch, stratified_batch};
pub use bilevel::{
    bilevel_hypergradient, fd_hessian, weyl_check, Hypergradient, WeightedSum, WeylReport, BILEVEL_MAX_DIM,
    STATIONARITY_TOL, WEYL_TOL,
};
pub use density::{
    equispaced_pool, importance_weighted_risk, update_density, AdaptiveSampling, ImportanceWeightedRisk,
    SamplingDensity,
};
pub use poisson::{
    eig2, poisson_refinement_study, surrogate_jacobian_row, surrogate_kernel, KernelSummary, RefinementStudy,
    REFINED_POINTS, UNIFORM_POINTS,
};
pub use weights::{
    gradnorm_step, gradnorm_update, pinn_gradnorm_update, residual_point_weights, weights_csv_string,
    write_weights_csv, GAMMA_FLOOR,
};
