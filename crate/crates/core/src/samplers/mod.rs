//! Discrete-time kernels and the ensemble runner.

mod ensemble;
mod projection;
mod schemes;

pub use ensemble::{run_ensemble, run_reference, Checkpoint, Ensemble, InitialState, SamplerConfig};
pub use projection::{project, project_into, ProjectionParams};
pub use schemes::{lmc_step, mtlmc_step, plmc_step, Scheme, DIVERGENCE_NORM};
pub(crate) use ensemble::integer_ratio;
