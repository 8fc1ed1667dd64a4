//! Optimistically weighted likelihood estimation.
//!
//! The estimator alternates two convex steps: an information projection that
//! re-weights the observations inside a total-variation ball around the
//! empirical distribution, and a weighted maximum-likelihood update of the
//! model parameters. The crate exposes both steps, the driver loop, a
//! curvature-based tuner for the ball radius, mixture model selection,
//! brute-force and Monte-Carlo verifiers, and a corruption benchmark harness.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod bench;
pub mod density;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod models;
pub mod prox;
pub mod types;
pub mod verify;

mod rng;

pub use admm::{
    i_projection, i_projection_conditional, i_projection_kernelized, AdmmConfig, AdmmSolver, KernelOperator,
};
pub use engine::{
    curvature_selection, kernel_bandwidth_grid, log_spaced_grid, mixture_selection, okl_estimate, owl_fit,
    owl_fit_conditional, owl_selection_criterion, select_bandwidth, tune_epsilon, uniform_grid, EpsilonSearchResult,
    MixtureSelection, OwlConfig, OwlFit, Penalty, SelectionResult,
};
pub use error::{OwlError, Result};
pub use types::*;

/// Library version embedded in output files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
