//! Drift models `f = -∇U` and Monte Carlo verifiers for the structural
//! assumptions the sampler analysis relies on:
//!
//! - dissipativity: `⟨x, f(x)⟩ ≤ -a1‖x‖² + a2`,
//! - contractivity at infinity:
//!   `⟨x-y, f(x)-f(y)⟩ ≤ (ã1·1{‖x-y‖≤R} - ã2)‖x-y‖²`,
//! - one-sided Lipschitz: `⟨x-y, f(x)-f(y)⟩ ≤ L‖x-y‖²`.
//!
//! The conditions are global, so the checkers can only sample bounded
//! regions; the sampling radius is a caller parameter.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, norm_sq};
use crate::randomness::{derive_stream, mix_seed, NoiseStream};

/// Signature of a user drift: writes `f(x)` into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Signature of a user potential `U(x)`.
pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Dissipativity slack used by [`make_ou`]; the OU drift needs none, but the
/// constant must be strictly positive.
pub const OU_A2: f64 = 1e-12;

/// Parameters of the double-well drift `f(x) = αx - β‖x‖²x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleWellParams {
    pub alpha: f64,
    pub beta: f64,
}

impl DoubleWellParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!(
                "double-well needs alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let c = self.alpha - self.beta * norm_sq(x);
        for (o, v) in out.iter_mut().zip(x) {
            *o = c * v;
        }
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        let r2 = norm_sq(x);
        -0.5 * self.alpha * r2 + 0.25 * self.beta * r2 * r2
    }
}

/// Constants `(ã1, ã2, R)` of the contractivity-at-infinity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contractivity {
    pub atilde1: f64,
    pub atilde2: f64,
    pub radius: f64,
}

#[derive(Clone)]
enum DriftKind {
    DoubleWell(DoubleWellParams),
    OrnsteinUhlenbeck,
    Custom {
        drift: DriftFn,
        potential: Option<PotentialFn>,
    },
}

/// A drift together with its growth exponent and assumption constants.
///
/// Immutable after construction; the drift is a pure function and the model
/// can be shared across workers.
#[derive(Clone)]
pub struct DriftModel {
    name: String,
    dimension: usize,
    gamma: f64,
    a1: f64,
    a2: f64,
    contractivity: Option<Contractivity>,
    cf: Option<f64>,
    kind: DriftKind,
}

impl fmt::Debug for DriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftModel")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("gamma", &self.gamma)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("contractivity", &self.contractivity)
            .field("cf", &self.cf)
            .finish_non_exhaustive()
    }
}

fn check_dimension(d: usize) -> Result<()> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    Ok(())
}

fn check_core_constants(gamma: f64, a1: f64, a2: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be >= 1, got {gamma}")));
    }
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(invalid(format!(
            "dissipativity constants must be positive, got a1={a1}, a2={a2}"
        )));
    }
    Ok(())
}

/// Double-well model `f(x) = αx - β‖x‖²x` in dimension `d` (γ = 3).
///
/// Dissipativity holds with `a1 = 1` and `a2 = (α+1)²/(4β)`, the maximum of
/// `(α+1)r² - βr⁴`; for `α = β = 1` this is `a1 = a2 = 1`. Contractivity
/// constants are only known in closed form for `α = β = 1`
/// (`ã1 = 4√2 + 19/2`, `ã2 = 1/2`, `R = 16 + 20√2`); other
/// parameterizations get none unless the caller supplies them.
pub fn make_double_well(alpha: f64, beta: f64, d: usize) -> Result<DriftModel> {
    let params = DoubleWellParams::new(alpha, beta)?;
    check_dimension(d)?;
    let standard = alpha == 1.0 && beta == 1.0;
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(DriftModel {
        name: "doublewell".to_string(),
        dimension: d,
        gamma: 3.0,
        a1: 1.0,
        a2: (alpha + 1.0).powi(2) / (4.0 * beta),
        contractivity: standard.then_some(Contractivity {
            atilde1: 4.0 * sqrt2 + 9.5,
            atilde2: 0.5,
            radius: 16.0 + 20.0 * sqrt2,
        }),
        cf: None,
        kind: DriftKind::DoubleWell(params),
    })
}

/// Ornstein–Uhlenbeck model `f(x) = -x`, `U(x) = ‖x‖²/2` (γ = 1). Its target
/// is the standard Gaussian.
pub fn make_ou(d: usize) -> Result<DriftModel> {
    check_dimension(d)?;
    Ok(DriftModel {
        name: "ou".to_string(),
        dimension: d,
        gamma: 1.0,
        a1: 1.0,
        a2: OU_A2,
        contractivity: None,
        cf: None,
        kind: DriftKind::OrnsteinUhlenbeck,
    })
}

impl DriftModel {
    /// A user-supplied drift with optional potential.
    pub fn custom(
        name: impl Into<String>,
        dimension: usize,
        gamma: f64,
        a1: f64,
        a2: f64,
        drift: DriftFn,
        potential: Option<PotentialFn>,
    ) -> Result<Self> {
        check_dimension(dimension)?;
        check_core_constants(gamma, a1, a2)?;
        Ok(Self {
            name: name.into(),
            dimension,
            gamma,
            a1,
            a2,
            contractivity: None,
            cf: None,
            kind: DriftKind::Custom { drift, potential },
        })
    }

    pub fn with_dissipativity(mut self, a1: f64, a2: f64) -> Result<Self> {
        check_core_constants(self.gamma, a1, a2)?;
        self.a1 = a1;
        self.a2 = a2;
        Ok(self)
    }

    pub fn with_contractivity(mut self, c: Contractivity) -> Result<Self> {
        if !(c.atilde1 > c.atilde2 && c.atilde2 > 0.0 && c.radius > 0.0) {
            return Err(invalid(format!(
                "contractivity constants need atilde1 > atilde2 > 0 and R > 0, got {c:?}"
            )));
        }
        self.contractivity = Some(c);
        Ok(self)
    }

    /// Same as [`with_contractivity`](Self::with_contractivity) but skips the
    /// ordering check; used to feed deliberately wrong constants to the checker.
    pub fn with_unchecked_contractivity(mut self, c: Contractivity) -> Self {
        self.contractivity = Some(c);
        self
    }

    pub fn with_cf(mut self, cf: f64) -> Result<Self> {
        if !(cf > 0.0 && cf.is_finite()) {
            return Err(invalid(format!("C_f must be positive, got {cf}")));
        }
        self.cf = Some(cf);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn contractivity(&self) -> Option<Contractivity> {
        self.contractivity
    }

    pub fn cf(&self) -> Option<f64> {
        self.cf
    }

    /// Double-well parameters when this is a double-well model.
    pub fn double_well(&self) -> Option<DoubleWellParams> {
        match self.kind {
            DriftKind::DoubleWell(p) => Some(p),
            _ => None,
        }
    }

    /// Writes `f(x)` into `out`. Both slices must have length `dimension`.
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DriftKind::DoubleWell(p) => p.drift_into(x, out),
            DriftKind::OrnsteinUhlenbeck => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            }
            DriftKind::Custom { drift, .. } => drift(x, out),
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut out);
        out
    }

    pub fn has_potential(&self) -> bool {
        !matches!(&self.kind, DriftKind::Custom { potential: None, .. })
    }

    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            DriftKind::DoubleWell(p) => Some(p.potential(x)),
            DriftKind::OrnsteinUhlenbeck => Some(0.5 * norm_sq(x)),
            DriftKind::Custom { potential, .. } => potential.as_ref().map(|u| u(x)),
        }
    }
}

/// Outcome of one Monte Carlo assumption check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub id: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `lhs - rhs`; positive means the inequality failed.
    pub worst_margin: f64,
    pub pass: bool,
}

impl AssumptionReport {
    pub(crate) fn from_counts(id: impl Into<String>, samples: usize, violations: usize, worst_margin: f64) -> Self {
        Self {
            id: id.into(),
            samples,
            violations,
            worst_margin,
            pass: violations == 0,
        }
    }
}

const CHUNK: usize = 1024;

/// Uniform point in the ball of the given radius.
pub(crate) fn sample_in_ball(stream: &mut NoiseStream, radius: f64, out: &mut [f64]) {
    sample_direction(stream, out);
    let r = radius * stream.next_uniform().powf(1.0 / out.len() as f64);
    out.iter_mut().for_each(|v| *v *= r);
}

/// Point with uniform direction and radius uniform in `[0, radius]`.
pub(crate) fn sample_radial(stream: &mut NoiseStream, radius: f64, out: &mut [f64]) {
    sample_direction(stream, out);
    let r = radius * stream.next_uniform();
    out.iter_mut().for_each(|v| *v *= r);
}

pub(crate) fn sample_direction(stream: &mut NoiseStream, out: &mut [f64]) {
    loop {
        stream.fill_gaussian(out);
        let n = norm(out);
        if n > 1e-300 {
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}

/// Runs `eval(stream, scratch) -> Option<margin>` for `n` samples split into
/// fixed chunks. Returns `(violations, worst_margin)`; identical for any number
/// of workers.
fn sampled_check<F>(n: usize, seed: u64, salt: u64, eval: F) -> (usize, f64)
where
    F: Fn(&mut NoiseStream, usize) -> (bool, f64) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let key = mix_seed(seed, salt);
    let partial: Vec<(usize, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = derive_stream(key, c as u64);
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for i in start..end {
                let (violated, margin) = eval(&mut stream, i);
                if violated {
                    violations += 1;
                }
                worst = worst.max(margin);
            }
            (violations, worst)
        })
        .collect();
    partial
        .into_iter()
        .fold((0, f64::NEG_INFINITY), |(v, w), (pv, pw)| (v + pv, w.max(pw)))
}

// Relative slack for rounding when comparing two sides that may agree exactly
// (e.g. ‖x‖ = 1 for the double-well dissipativity bound).
const SLACK: f64 = 1e-12;

/// Checks `⟨x, f(x)⟩ ≤ -a1‖x‖² + a2` on `n_samples` points uniform in the ball.
pub fn check_dissipativity(
    model: &DriftModel,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let (a1, a2) = (model.a1, model.a2);
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::Configuration("dissipativity constants not set".into()));
    }
    let d = model.dimension;
    let (violations, worst) = sampled_check(n_samples, seed, 0xd155, |stream, _| {
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; d];
        sample_in_ball(stream, radius, &mut x);
        model.drift_into(&x, &mut fx);
        let lhs = dot(&x, &fx);
        let r2 = norm_sq(&x);
        let margin = lhs + a1 * r2 - a2;
        let scale = lhs.abs() + a1 * r2 + a2;
        (margin > SLACK * scale, margin)
    });
    Ok(AssumptionReport::from_counts("dissipativity", n_samples, violations, worst))
}

/// Pairs for the two-point conditions: even indices draw `x, y`
/// independently with radius uniform on `[0, radius]`; odd indices draw `y`
/// near `x` (offset of norm up to 2) to probe the non-convex core.
fn sample_pair(stream: &mut NoiseStream, i: usize, radius: f64, x: &mut [f64], y: &mut [f64]) {
    sample_radial(stream, radius, x);
    if i.is_multiple_of(2) {
        sample_radial(stream, radius, y);
    } else {
        sample_radial(stream, radius.min(2.0), y);
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi += xi;
        }
    }
}

fn two_point_check<B>(
    model: &DriftModel,
    id: &str,
    n_pairs: usize,
    radius: f64,
    seed: u64,
    salt: u64,
    bound: B,
) -> AssumptionReport
where
    B: Fn(f64) -> f64 + Sync,
{
    let d = model.dimension;
    let (violations, worst) = sampled_check(n_pairs, seed, salt, |stream, i| {
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut fx = vec![0.0; d];
        let mut fy = vec![0.0; d];
        sample_pair(stream, i, radius, &mut x, &mut y);
        model.drift_into(&x, &mut fx);
        model.drift_into(&y, &mut fy);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let fdiff: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let lhs = dot(&diff, &fdiff);
        let dist = norm(&diff);
        let rhs = bound(dist) * dist * dist;
        let margin = lhs - rhs;
        let scale = lhs.abs() + rhs.abs() + dist * norm(&fdiff);
        (margin > SLACK * scale, margin)
    });
    AssumptionReport::from_counts(id, n_pairs, violations, worst)
}

/// Checks `⟨x-y, f(x)-f(y)⟩ ≤ (ã1·1{‖x-y‖≤R} - ã2)‖x-y‖²` on sampled pairs.
pub fn check_contractivity_at_infinity(
    model: &DriftModel,
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    let c = model
        .contractivity
        .ok_or_else(|| Error::Configuration("contractivity constants not set".into()))?;
    if n_pairs == 0 {
        return Err(invalid("n_pairs must be at least 1"));
    }
    Ok(two_point_check(
        model,
        "contractivity_at_infinity",
        n_pairs,
        radius,
        seed,
        0xc0a7,
        |dist| {
            let inside = if dist <= c.radius { c.atilde1 } else { 0.0 };
            inside - c.atilde2
        },
    ))
}

/// Checks `⟨x-y, f(x)-f(y)⟩ ≤ L‖x-y‖²` on sampled pairs.
pub fn check_one_sided_lipschitz(
    model: &DriftModel,
    lipschitz: f64,
    n_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if !(lipschitz > 0.0) {
        return Err(invalid(format!("L must be positive, got {lipschitz}")));
    }
    if n_pairs == 0 {
        return Err(invalid("n_pairs must be at least 1"));
    }
    Ok(two_point_check(
        model,
        "one_sided_lipschitz",
        n_pairs,
        radius,
        seed,
        0x051c,
        |_| lipschitz,
    ))
}

/// Compares `f` with central differences of `U`:
/// `|f_i(x) + (U(x+δe_i) - U(x-δe_i))/(2δ)| ≤ tol·(1 + ‖f(x)‖)` with
/// `δ = 1e-5·(1 + ‖x‖)`, at `n_points` points uniform in the ball.
pub fn check_gradient_consistency(
    model: &DriftModel,
    n_points: usize,
    radius: f64,
    tol: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if !model.has_potential() {
        return Err(Error::Configuration(format!("model {} has no potential", model.name)));
    }
    let d = model.dimension;
    let mut stream = derive_stream(mix_seed(seed, 0x9bad), 0);
    let mut x = vec![0.0; d];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_points {
        sample_in_ball(&mut stream, radius, &mut x);
        let fx = model.drift(&x);
        let delta = 1e-5 * (1.0 + norm(&x));
        let fnorm = norm(&fx);
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += delta;
            xm[i] -= delta;
            let up = model.potential(&xp).unwrap_or(f64::NAN);
            let um = model.potential(&xm).unwrap_or(f64::NAN);
            let err = (fx[i] + (up - um) / (2.0 * delta)).abs();
            let margin = err - tol * (1.0 + fnorm);
            worst = worst.max(margin);
            if !(margin <= 0.0) {
                violations += 1;
            }
        }
    }
    Ok(AssumptionReport::from_counts("gradient_consistency", n_points, violations, worst))
}

const CF_RADII: usize = 512;
const CF_DIRECTIONS: usize = 64;

/// Numerical drift-bound constant `C_f`.
///
/// For γ > 1: the maximum over `h` in `h_grid` and radii `r` on a 512-point
/// grid of `[0, ϑ(d/h)^{1/(2γ)}]` of `max_{‖x‖=r} ‖f(x)‖ / (ϑ^γ d^{1/2} h^{-1/2})`.
/// For γ = 1: the maximum of `‖f(x)‖ / (1 + ‖x‖)` over radii log-spaced in
/// `[1e-3, 1e6]`. Each radius is probed along `±e_i` and 64 random directions.
pub fn estimate_cf(model: &DriftModel, h_grid: &[f64], theta: f64) -> Result<f64> {
    if h_grid.is_empty() {
        return Err(invalid("h_grid must not be empty"));
    }
    if let Some(h) = h_grid.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
        return Err(invalid(format!("step sizes must lie in (0, 1), got {h}")));
    }
    let d = model.dimension;
    let directions = probe_directions(d);
    let radial_max = |r: f64| -> f64 {
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; d];
        directions
            .iter()
            .map(|u| {
                for (xi, ui) in x.iter_mut().zip(u) {
                    *xi = r * ui;
                }
                model.drift_into(&x, &mut fx);
                norm(&fx)
            })
            .fold(0.0, f64::max)
    };

    if model.gamma == 1.0 {
        let best = (0..CF_RADII)
            .into_par_iter()
            .map(|k| {
                let r = 10f64.powf(-3.0 + 9.0 * k as f64 / (CF_RADII - 1) as f64);
                radial_max(r) / (1.0 + r)
            })
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }

    let gamma = model.gamma;
    let dimf = d as f64;
    let mut best = 0.0f64;
    for &h in h_grid {
        let cap = theta * (dimf / h).powf(1.0 / (2.0 * gamma));
        let scale = theta.powf(gamma) * dimf.sqrt() / h.sqrt();
        let m = (0..CF_RADII)
            .into_par_iter()
            .map(|k| radial_max(cap * k as f64 / (CF_RADII - 1) as f64))
            .reduce(|| 0.0, f64::max);
        best = best.max(m / scale);
    }
    Ok(best)
}

fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(2 * d + CF_DIRECTIONS);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = sign;
            dirs.push(e);
        }
    }
    let mut stream = derive_stream(0x00cf_0000, 0);
    for _ in 0..CF_DIRECTIONS {
        let mut u = vec![0.0; d];
        sample_direction(&mut stream, &mut u);
        dirs.push(u);
    }
    dirs
}

/// Upper end of the step-size window `min{1/(2a1), 2a1/(a1 + 2C_f²), 1}`.
pub fn admissible_h_max(model: &DriftModel) -> Result<f64> {
    let cf = model
        .cf
        .ok_or_else(|| Error::Configuration("C_f not set on model".into()))?;
    Ok(admissible_window(model.a1, cf))
}

pub(crate) fn admissible_window(a1: f64, cf: f64) -> f64 {
    (1.0 / (2.0 * a1)).min(2.0 * a1 / (a1 + 2.0 * cf * cf)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn double_well_roots() {
        let m = make_double_well(1.0, 1.0, 3).unwrap();
        assert_eq!(m.drift(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
        assert_eq!(m.drift(&[1.0, 0.0, 0.0]), vec![0.0; 3]);
        assert_eq!(m.gamma(), 3.0);
    }

    #[test]
    fn double_well_standard_constants() {
        let m = make_double_well(1.0, 1.0, 2).unwrap();
        let c = m.contractivity().unwrap();
        let s2 = 2f64.sqrt();
        assert_eq!((m.a1(), m.a2()), (1.0, 1.0));
        assert_relative_eq!(c.atilde1, 4.0 * s2 + 9.5);
        assert_eq!(c.atilde2, 0.5);
        assert_relative_eq!(c.radius, 16.0 + 20.0 * s2);
        assert!(make_double_well(1.0, 4.0, 2).unwrap().contractivity().is_none());
    }

    #[test]
    fn double_well_rejects_nonpositive() {
        assert!(matches!(make_double_well(0.0, 1.0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_double_well(1.0, -1.0, 2), Err(Error::InvalidParameter(_))));
        assert!(make_double_well(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn ou_drift_is_linear() {
        let m = make_ou(3).unwrap();
        assert_eq!(m.drift(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(m.drift(&[2.0, 0.0, 0.0]), vec![-2.0, 0.0, 0.0]);
        assert_eq!(m.gamma(), 1.0);
        assert!(m.a2() > 0.0);
    }

    #[test]
    fn dissipativity_margin_at_radius_two() {
        // ⟨x, f(x)⟩ = ‖x‖²(1 - ‖x‖²) = -12 and -a1‖x‖² + a2 = -3.
        let m = make_double_well(1.0, 1.0, 2).unwrap();
        let x = [2.0, 0.0];
        let lhs = dot(&x, &m.drift(&x));
        assert_eq!(lhs, -12.0);
        assert_eq!(lhs + 4.0 - 1.0, -9.0);
    }

    #[test]
    fn dissipativity_requires_samples() {
        let m = make_ou(2).unwrap();
        assert!(check_dissipativity(&m, 0, 1.0, 1).is_err());
    }

    #[test]
    fn ou_dissipativity_margin_is_nonpositive() {
        let m = make_ou(4).unwrap();
        let r = check_dissipativity(&m, 5000, 10.0, 3).unwrap();
        assert!(r.pass);
        assert!(r.worst_margin <= 0.0);
    }

    #[test]
    fn contractivity_needs_constants() {
        let m = make_double_well(1.0, 4.0, 2).unwrap();
        assert!(matches!(
            check_contractivity_at_infinity(&m, 10, 1.0, 1),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn ou_contractivity_and_lipschitz() {
        let m = make_ou(3)
            .unwrap()
            .with_contractivity(Contractivity { atilde1: 2.0, atilde2: 1.0, radius: 1.0 })
            .unwrap();
        assert!(check_contractivity_at_infinity(&m, 4000, 10.0, 5).unwrap().pass);
        assert!(check_one_sided_lipschitz(&m, 1.0, 4000, 10.0, 5).unwrap().pass);
    }

    #[test]
    fn corrupted_contractivity_fails() {
        let m = make_double_well(1.0, 1.0, 2).unwrap();
        let good = m.contractivity().unwrap();
        let bad = m.with_unchecked_contractivity(Contractivity { atilde2: 50.0, ..good });
        let r = check_contractivity_at_infinity(&bad, 20_000, 60.0, 2).unwrap();
        assert!(!r.pass);
        assert!(r.worst_margin > 0.0);
    }

    #[test]
    fn contractivity_rejects_bad_ordering() {
        let m = make_ou(1).unwrap();
        assert!(m
            .with_contractivity(Contractivity { atilde1: 1.0, atilde2: 2.0, radius: 1.0 })
            .is_err());
    }

    #[test]
    fn lipschitz_rejects_nonpositive() {
        let m = make_ou(1).unwrap();
        assert!(check_one_sided_lipschitz(&m, 0.0, 10, 1.0, 1).is_err());
    }

    #[test]
    fn gradients_match_potentials() {
        for m in [make_double_well(1.0, 4.0, 5).unwrap(), make_ou(5).unwrap()] {
            let r = check_gradient_consistency(&m, 100, 5.0, 1e-5, 11).unwrap();
            assert!(r.pass, "{}: {r:?}", m.name());
        }
    }

    #[test]
    fn cf_for_ou_approaches_one() {
        let cf = estimate_cf(&make_ou(3).unwrap(), &[0.1], 1.0).unwrap();
        assert!(cf <= 1.0 && cf > 1.0 - 1e-5, "{cf}");
    }

    #[test]
    fn cf_for_double_well() {
        // ‖f(x)‖ = r|1 - r²| is largest at the cap radius r* = (d/h)^{1/6}, where
        // (r*³ - r*) / (d^{1/2} h^{-1/2}) = 1 - (h/d)^{1/3}; the triangle bound
        // r + r³ gives 1 + (h/d)^{1/3} ≤ 2.
        let d = 4;
        let h = 0.125;
        let m = make_double_well(1.0, 1.0, d).unwrap();
        let cf = estimate_cf(&m, &[h], 1.0).unwrap();
        let exact = 1.0 - (h / d as f64).powf(1.0 / 3.0);
        assert_relative_eq!(cf, exact, max_relative = 1e-12);
        assert!(cf <= 1.0 + (h / d as f64).powf(1.0 / 3.0));
        let two = estimate_cf(&m, &[h, 0.5], 1.0).unwrap();
        let single_half = estimate_cf(&m, &[0.5], 1.0).unwrap();
        assert_eq!(two, cf.max(single_half));
    }

    #[test]
    fn cf_rejects_empty_grid() {
        let m = make_ou(1).unwrap();
        assert!(matches!(estimate_cf(&m, &[], 1.0), Err(Error::InvalidParameter(_))));
        assert!(estimate_cf(&m, &[1.5], 1.0).is_err());
    }

    #[test]
    fn admissible_window_values() {
        let m = make_double_well(1.0, 1.0, 2).unwrap();
        assert!(matches!(admissible_h_max(&m), Err(Error::Configuration(_))));
        let m2 = m.clone().with_cf(2.0).unwrap();
        assert_relative_eq!(admissible_h_max(&m2).unwrap(), 2.0 / 9.0);
        let m1 = m.with_cf(1.0).unwrap();
        assert_eq!(admissible_h_max(&m1).unwrap(), 0.5);
        assert!(admissible_window(0.5, 1e6) < 1e-11);
    }

    #[test]
    fn admissible_window_monotone_in_cf() {
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let cf = 0.01 * k as f64 + 0.01;
            let w = admissible_window(1.0, cf);
            assert!(w <= prev);
            prev = w;
        }
        // Equals 1 only when both other terms are ≥ 1.
        assert_eq!(admissible_window(0.4, 0.1), 1.0);
        assert!(admissible_window(0.6, 0.1) < 1.0);
    }
}
