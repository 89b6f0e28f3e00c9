use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::projection::project_with_cap;
use crate::error::{invalid, Error, Result};
use crate::linalg::norm_sq;
use crate::model::{DoubleWellParams, DriftModel};

/// States with a norm above this (or any non-finite coordinate) are diverged.
pub const DIVERGENCE_NORM: f64 = 1e150;

/// Discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    /// Unadjusted Langevin (Euler–Maruyama).
    Lmc,
    /// Projected Langevin.
    Plmc,
    /// Modified tamed Langevin (double-well drift only).
    Mtlmc,
    /// Fine-step PLMC used as the surrogate exact law.
    Reference,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Lmc => "LMC",
            Scheme::Plmc => "PLMC",
            Scheme::Mtlmc => "MTLMC",
            Scheme::Reference => "REFERENCE",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LMC" => Ok(Scheme::Lmc),
            "PLMC" => Ok(Scheme::Plmc),
            "MTLMC" => Ok(Scheme::Mtlmc),
            "REFERENCE" => Ok(Scheme::Reference),
            other => Err(invalid(format!("unknown scheme {other}"))),
        }
    }
}

#[inline]
pub(crate) fn is_diverged(y: &[f64]) -> bool {
    let n2 = norm_sq(y);
    !(n2.is_finite() && n2 <= DIVERGENCE_NORM * DIVERGENCE_NORM) || y.iter().any(|v| !v.is_finite())
}

/// A scheme specialised to one (model, h, ϑ) triple, with the constants the
/// inner loop needs precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Kernel {
    Lmc,
    Plmc { cap: f64 },
    Mtlmc { params: DoubleWellParams },
}

impl Kernel {
    pub(crate) fn new(scheme: Scheme, model: &DriftModel, h: f64, theta: f64) -> Result<Self> {
        match scheme {
            Scheme::Lmc => Ok(Kernel::Lmc),
            Scheme::Plmc | Scheme::Reference => {
                if model.gamma() == 1.0 {
                    Ok(Kernel::Lmc)
                } else {
                    let cap = theta * (model.dimension() as f64 / h).powf(1.0 / (2.0 * model.gamma()));
                    Ok(Kernel::Plmc { cap })
                }
            }
            Scheme::Mtlmc => model
                .double_well()
                .map(|params| Kernel::Mtlmc { params })
                .ok_or_else(|| invalid("MTLMC is defined only for the double-well drift")),
        }
    }

    /// Advances `y` in place by one step with noise `xi`. `buf` and `drift`
    /// are scratch of length d. Returns `false` when the new state diverged.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step(
        &self,
        model: &DriftModel,
        y: &mut [f64],
        h: f64,
        sqrt_2h: f64,
        xi: &[f64],
        buf: &mut [f64],
        drift: &mut [f64],
    ) -> bool {
        match *self {
            Kernel::Lmc => {
                model.drift_into(y, drift);
                for ((yi, fi), zi) in y.iter_mut().zip(drift.iter()).zip(xi) {
                    *yi += fi * h + sqrt_2h * zi;
                }
            }
            Kernel::Plmc { cap } => {
                project_with_cap(y, cap, buf);
                model.drift_into(buf, drift);
                for (((yi, pi), fi), zi) in y.iter_mut().zip(buf.iter()).zip(drift.iter()).zip(xi) {
                    *yi = pi + (fi * h + sqrt_2h * zi);
                }
            }
            Kernel::Mtlmc { params } => {
                let r2 = norm_sq(y);
                let taming = (1.0 + h * r2 * r2 * r2).sqrt();
                let c = (params.alpha - params.beta * r2) / taming * h;
                for (yi, zi) in y.iter_mut().zip(xi) {
                    *yi += c * *yi + sqrt_2h * zi;
                }
            }
        }
        !is_diverged(y)
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid(format!("step size must lie in (0, 1), got {h}")));
    }
    Ok(())
}

fn single_step(kernel: Kernel, model: &DriftModel, y: &[f64], h: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if y.len() != xi.len() || y.len() != model.dimension() {
        return Err(invalid("state, noise and model dimensions differ"));
    }
    if is_diverged(y) {
        return Err(Error::Divergence { step: 0 });
    }
    let d = y.len();
    let mut out = y.to_vec();
    let (mut buf, mut drift) = (vec![0.0; d], vec![0.0; d]);
    if kernel.step(model, &mut out, h, (2.0 * h).sqrt(), xi, &mut buf, &mut drift) {
        Ok(out)
    } else {
        Err(Error::Divergence { step: 1 })
    }
}

/// One PLMC step `P(y) + f(P(y))·h + √(2h)·ξ`.
pub fn plmc_step(y: &[f64], model: &DriftModel, h: f64, theta: f64, xi: &[f64]) -> Result<Vec<f64>> {
    check_step(h)?;
    if !(theta >= 1.0) {
        return Err(invalid(format!("theta must be >= 1, got {theta}")));
    }
    single_step(Kernel::new(Scheme::Plmc, model, h, theta)?, model, y, h, xi)
}

/// One LMC (Euler–Maruyama) step `y + f(y)·h + √(2h)·ξ`.
pub fn lmc_step(y: &[f64], model: &DriftModel, h: f64, xi: &[f64]) -> Result<Vec<f64>> {
    check_step(h)?;
    single_step(Kernel::Lmc, model, y, h, xi)
}

/// One tamed step `y + h(αy - β‖y‖²y)/(1 + h‖y‖⁶)^{1/2} + √(2h)·ξ`.
pub fn mtlmc_step(y: &[f64], params: DoubleWellParams, h: f64, xi: &[f64]) -> Result<Vec<f64>> {
    check_step(h)?;
    if y.len() != xi.len() {
        return Err(invalid("state and noise dimensions differ"));
    }
    if is_diverged(y) {
        return Err(Error::Divergence { step: 0 });
    }
    let model = crate::model::make_double_well(params.alpha, params.beta, y.len())?;
    single_step(Kernel::Mtlmc { params }, &model, y, h, xi)
}
