//! Projected Langevin Monte Carlo (PLMC) for sampling from Gibbs measures
//! `π ∝ exp(-U)` whose drift `f = -∇U` grows superlinearly.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: drift models (double-well, Ornstein–Uhlenbeck, user supplied)
//!   and Monte Carlo checkers for the structural assumptions on the drift.
//! - [`randomness`]: counter-based Gaussian noise streams keyed by
//!   `(master_seed, trajectory_index)`.
//! - [`samplers`]: the projection operator, the PLMC / LMC / tamed kernels and a
//!   deterministic parallel ensemble runner.
//! - [`metrics`]: bounded test functions, weak-error and total-variation
//!   estimators, moment bounds, order fitting and exact Gaussian oracles.
//! - [`harness`]: experiment drivers and CSV/JSON reports.
//!
//! Every ensemble is reproducible: trajectory `i` draws its noise from
//! `derive_stream(seed, i)` and all reductions over trajectories use a fixed
//! pairwise summation order, so results do not depend on the worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod randomness;
pub mod samplers;

mod linalg;

pub use error::{Error, Result};
pub use harness::{
    plan_mixing, run_convergence, run_density, run_dimdep, run_sample, run_verify,
    ExperimentKind, ExperimentReport, ExperimentSpec, MixingInput, MixingPlan, ModelSpec,
    OutputFormat,
};
pub use metrics::{
    estimate_expectation, fit_order, gaussian_tv_oracle, histogram, ks_statistic,
    make_test_function, moment_curve, sde_moment_bound, tv_lower_bound, weak_error,
    ErrorRecord, Expectation, OrderFit, TestFunction, TestFunctionId,
};
pub use model::{
    admissible_h_max, check_contractivity_at_infinity, check_dissipativity,
    check_one_sided_lipschitz, estimate_cf, make_double_well, make_ou, AssumptionReport,
    Contractivity, DoubleWellParams, DriftModel,
};
pub use randomness::{derive_stream, NoiseStream};
pub use samplers::{
    lmc_step, mtlmc_step, plmc_step, project, run_ensemble, run_reference, Ensemble,
    ProjectionParams, SamplerConfig, Scheme,
};
