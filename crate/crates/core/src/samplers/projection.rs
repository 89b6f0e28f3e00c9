use crate::error::{invalid, Result};
use crate::linalg::norm;

/// Parameters of the projection `P(x) = min{1, ϑ(d/h)^{1/(2γ)}/‖x‖}·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    pub gamma: f64,
    pub theta: f64,
    pub dimension: usize,
    pub step: f64,
}

impl ProjectionParams {
    pub fn new(gamma: f64, theta: f64, dimension: usize, step: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(invalid(format!("gamma must be >= 1, got {gamma}")));
        }
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(invalid(format!("theta must be >= 1, got {theta}")));
        }
        if dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(step > 0.0 && step < 1.0) {
            return Err(invalid(format!("step must lie in (0, 1), got {step}")));
        }
        Ok(Self { gamma, theta, dimension, step })
    }

    /// Ball radius `ϑ(d/h)^{1/(2γ)}`; infinite for γ = 1 (identity).
    pub fn cap_radius(&self) -> f64 {
        if self.gamma == 1.0 {
            f64::INFINITY
        } else {
            self.theta * (self.dimension as f64 / self.step).powf(1.0 / (2.0 * self.gamma))
        }
    }
}

// States within this relative band of the cap are left untouched so that
// P(P(x)) == P(x) holds bitwise despite rounding in the rescaled norm.
const CAP_BAND: f64 = 8.0 * f64::EPSILON;

/// Writes `P(x)` into `out` given a precomputed cap radius.
#[inline]
pub(crate) fn project_with_cap(x: &[f64], cap: f64, out: &mut [f64]) {
    let n = norm(x);
    if n <= cap * (1.0 + CAP_BAND) {
        out.copy_from_slice(x);
    } else {
        let s = cap / n;
        for (o, v) in out.iter_mut().zip(x) {
            *o = s * v;
        }
    }
}

pub fn project_into(x: &[f64], p: &ProjectionParams, out: &mut [f64]) {
    project_with_cap(x, p.cap_radius(), out);
}

/// Projection onto the ball of radius `ϑ(d/h)^{1/(2γ)}` (identity for γ = 1).
/// `0` maps to `0`.
pub fn project(x: &[f64], p: &ProjectionParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    project_into(x, p, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_for_lipschitz_case() {
        let p = ProjectionParams::new(1.0, 1.0, 3, 0.5).unwrap();
        let x = vec![1e9, -3.0, 2.5];
        assert_eq!(project(&x, &p), x);
    }

    #[test]
    fn hand_evaluated_projection() {
        // cap = 1·(8/(1/8))^{1/6} = 64^{1/6} = 2, ‖x‖ = 5.
        let p = ProjectionParams::new(3.0, 1.0, 8, 0.125).unwrap();
        assert!((p.cap_radius() - 2.0).abs() < 1e-15);
        let mut x = vec![0.0; 8];
        x[0] = 3.0;
        x[1] = 4.0;
        let y = project(&x, &p);
        assert!((y[0] - 1.2).abs() < 1e-15 && (y[1] - 1.6).abs() < 1e-15);
        assert!(y[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_maps_to_zero() {
        let p = ProjectionParams::new(3.0, 1.0, 4, 0.1).unwrap();
        assert_eq!(project(&[0.0; 4], &p), vec![0.0; 4]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProjectionParams::new(0.5, 1.0, 1, 0.1).is_err());
        assert!(ProjectionParams::new(3.0, 0.5, 1, 0.1).is_err());
        assert!(ProjectionParams::new(3.0, 1.0, 0, 0.1).is_err());
        assert!(ProjectionParams::new(3.0, 1.0, 1, 1.0).is_err());
    }
}
