//! Curvature-aware optimizers: damped Gauss-Newton, inexact Newton-CG,
//! subsampled Newton, dense BFGS and L-BFGS, with backtracking and
//! strong-Wolfe line searches.
//!
//! Secant pairs are stored from the first iteration onward and the oldest
//! is evicted once more than `S` are held. A literal reading of some
//! presentations stores pairs only after the first `S` iterations; the
//! difference only affects the opening steps.

mod hvp;
mod lbfgs;
mod linesearch;
mod newton;

pub use hvp::{fd_hvp, CurvatureOperator, HvpOracle, FD_HVP_STEP};
pub use lbfgs::{
    bfgs_inverse_update, lbfgs_run, lbfgs_run_from, LbfgsConfig, LbfgsMemory, SecantPair, CURVATURE_SKIP,
};
pub use linesearch::{line_search_armijo, line_search_wolfe, LineSearchParams, LineSearchResult};
pub use newton::{
    forcing_term, gauss_newton_step, newton_cg_step, newton_run, subsampled_newton_step, NewtonConfig,
    NewtonMethod, NewtonStep,
};
