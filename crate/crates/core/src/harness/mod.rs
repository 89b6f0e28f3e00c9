//! Experiment drivers, the mixing-time planner and report serialization.

mod experiments;
mod mixing;
mod report;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{make_double_well, make_ou, DriftModel};
use crate::samplers::Scheme;

pub use experiments::{run_convergence, run_density, run_dimdep, run_sample, SampleOutput};
pub use mixing::{plan_mixing, MixingInput, MixingPlan};
pub use report::{
    orders_from_csv, write_dump, DivergenceRow, ExperimentReport, HistRow, KsRow, OrderRow, ReportRow, TvRow,
};
pub use verify::{run_verify, VerifyOverrides};

/// Which study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    Converge,
    Density,
    Dimdep,
    Verify,
    Mixing,
    Sample,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Converge => "converge",
            ExperimentKind::Density => "density",
            ExperimentKind::Dimdep => "dimdep",
            ExperimentKind::Verify => "verify",
            ExperimentKind::Mixing => "mixing",
            ExperimentKind::Sample => "sample",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(invalid(format!("unknown format {other}"))),
        }
    }
}

/// Model family and parameters; the dimension is supplied per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelSpec {
    DoubleWell { alpha: f64, beta: f64 },
    Ou,
}

impl ModelSpec {
    pub fn build(&self, d: usize) -> Result<DriftModel> {
        match *self {
            ModelSpec::DoubleWell { alpha, beta } => make_double_well(alpha, beta, d),
            ModelSpec::Ou => make_ou(d),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::DoubleWell { .. } => "doublewell",
            ModelSpec::Ou => "ou",
        }
    }

    /// `(alpha, beta)` for reports; OU reports `(0, 0)`.
    pub fn alpha_beta(&self) -> (f64, f64) {
        match *self {
            ModelSpec::DoubleWell { alpha, beta } => (alpha, beta),
            ModelSpec::Ou => (0.0, 0.0),
        }
    }
}

pub const DESK_TRAJECTORIES: usize = 1000;
pub const FULL_TRAJECTORIES: usize = 3000;
pub const DESK_H_REF: f64 = 1.0 / 2048.0;
pub const FULL_H_REF: f64 = 1.0 / 8192.0;

/// One experiment description. Construct with one of the presets and adjust
/// fields as needed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    /// Scheme for `sample`.
    pub scheme: Scheme,
    /// Second scheme for `density`.
    pub compare_scheme: Scheme,
    /// Step sizes, strictly decreasing.
    pub h_grid: Vec<f64>,
    pub dims: Vec<usize>,
    pub t_final: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub theta: f64,
    pub h_ref: f64,
    /// Drive references with the coarse runs' Brownian paths.
    pub coupled: bool,
    pub format: OutputFormat,
}

fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

impl ExperimentSpec {
    /// Double-well α=1, β=4, d=6, T=6, h ∈ {2⁻⁵…2⁻⁹}, coupled reference 2⁻¹¹, M=1000.
    pub fn convergence() -> Self {
        Self {
            kind: ExperimentKind::Converge,
            model: ModelSpec::DoubleWell { alpha: 1.0, beta: 4.0 },
            scheme: Scheme::Plmc,
            compare_scheme: Scheme::Mtlmc,
            h_grid: (5..=9).map(|k| pow2(-k)).collect(),
            dims: vec![6],
            t_final: 6.0,
            n_traj: DESK_TRAJECTORIES,
            seed: 42,
            theta: 1.0,
            h_ref: DESK_H_REF,
            coupled: true,
            format: OutputFormat::Csv,
        }
    }

    /// α=β=1, h=2⁻⁴, 80 iterations (T=5), d ∈ {10,20,50,100}.
    pub fn dimension_dependence() -> Self {
        Self {
            kind: ExperimentKind::Dimdep,
            model: ModelSpec::DoubleWell { alpha: 1.0, beta: 1.0 },
            h_grid: vec![pow2(-4)],
            dims: vec![10, 20, 50, 100],
            t_final: 80.0 * pow2(-4),
            ..Self::convergence()
        }
    }

    /// PLMC vs MTLMC, d=10, α=1, β=4, T=6, h=2⁻⁹, M=3000.
    pub fn density() -> Self {
        Self {
            kind: ExperimentKind::Density,
            h_grid: vec![pow2(-9)],
            dims: vec![10],
            n_traj: FULL_TRAJECTORIES,
            ..Self::convergence()
        }
    }

    /// Assumption and property suite on the double-well α=β=1.
    pub fn verify() -> Self {
        Self {
            kind: ExperimentKind::Verify,
            model: ModelSpec::DoubleWell { alpha: 1.0, beta: 1.0 },
            h_grid: vec![0.125],
            dims: vec![4],
            ..Self::convergence()
        }
    }

    /// Single PLMC ensemble on the d=6 double-well.
    pub fn sample() -> Self {
        Self {
            kind: ExperimentKind::Sample,
            h_grid: vec![pow2(-5)],
            ..Self::convergence()
        }
    }

    /// Full-scale settings: M = 3000 and h_ref = 2⁻¹³.
    pub fn full_scale(mut self) -> Self {
        self.n_traj = FULL_TRAJECTORIES;
        self.h_ref = FULL_H_REF;
        self
    }

    /// Number of steps needed to reach `t_final` with step `h`.
    pub fn steps_for(&self, h: f64) -> Result<usize> {
        crate::samplers::integer_ratio(self.t_final, h)
            .ok_or_else(|| invalid(format!("T={} is not an integer multiple of h={h}", self.t_final)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_grid.is_empty() {
            return Err(invalid("h grid must not be empty"));
        }
        if let Some(h) = self.h_grid.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(invalid(format!("step sizes must lie in (0, 1), got {h}")));
        }
        if self.h_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("h grid must be strictly decreasing"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(invalid("dimension list must be non-empty and positive"));
        }
        if self.n_traj == 0 {
            return Err(invalid("trajectory count must be positive"));
        }
        if !(self.t_final > 0.0) {
            return Err(invalid("T must be positive"));
        }
        for &h in &self.h_grid {
            self.steps_for(h)?;
        }
        Ok(())
    }
}
