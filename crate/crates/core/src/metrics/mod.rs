//! Estimators, oracles and fitting.

mod estimators;
mod oracle;
mod stats;
mod test_functions;

pub use estimators::{
    checkpoint_curve, estimate_expectation, moment_curve, tv_lower_bound, weak_error, ErrorRecord, Expectation,
};
pub use oracle::{gaussian_tv_oracle, isotropic_gaussian_tv_oracle, lmc_ou_stationary_variance, sde_moment_bound};
pub use stats::{fit_order, histogram, ks_statistic, least_squares_slope, OrderFit};
pub use test_functions::{make_test_function, PhiFn, TestFunction, TestFunctionId, STANDARD_TEST_FUNCTIONS};
