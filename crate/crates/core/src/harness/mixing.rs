use serde::Serialize;

use crate::error::{invalid, Result};

/// Inputs of the mixing-time planner. `c`, `c_star_upper` and `c_star_rate`
/// are the unknown constants `C`, `C⋆`, `c⋆` and default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingInput {
    pub epsilon: f64,
    pub gamma: f64,
    pub d: usize,
    pub c: f64,
    pub c_star_upper: f64,
    pub c_star_rate: f64,
    /// `‖φ‖₀`.
    pub phi_sup: f64,
    /// `E‖x0‖`.
    pub mean_x0_norm: f64,
}

impl MixingInput {
    pub fn new(epsilon: f64, gamma: f64, d: usize) -> Self {
        Self {
            epsilon,
            gamma,
            d,
            c: 1.0,
            c_star_upper: 1.0,
            c_star_rate: 1.0,
            phi_sup: 1.0,
            mean_x0_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingPlan {
    pub input: MixingInput,
    pub h: f64,
    pub k: u64,
    pub note: &'static str,
}

impl MixingPlan {
    /// `ln(2C⋆‖φ‖₀(1 + E‖x0‖)/ε) / c⋆`, the horizon `k·h` must reach.
    pub fn required_horizon(&self) -> f64 {
        required_horizon(&self.input)
    }
}

fn required_horizon(i: &MixingInput) -> f64 {
    (2.0 * i.c_star_upper * i.phi_sup * (1.0 + i.mean_x0_norm) / i.epsilon).ln() / i.c_star_rate
}

/// Step size and iteration count that bring the projected chain within `ε`
/// of the target in total variation, up to the unknown constants.
///
/// γ = 1: `h = ε / (2C d^{3/2})`. γ > 1: `h = [4C (d^q/ε) ln(2C d^q/ε)]⁻¹`
/// with `q = max{3γ/2, 2γ − 1}`. Then `k = ⌈ln(2C⋆‖φ‖₀(1+E‖x0‖)/ε) / (c⋆h)⌉`.
pub fn plan_mixing(input: MixingInput) -> Result<MixingPlan> {
    let MixingInput { epsilon, gamma, d, c, c_star_upper, c_star_rate, phi_sup, mean_x0_norm } = input;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be at least 1, got {gamma}")));
    }
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    for (name, v) in [("C", c), ("C*", c_star_upper), ("c*", c_star_rate), ("phi_sup", phi_sup)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if !(mean_x0_norm >= 0.0 && mean_x0_norm.is_finite()) {
        return Err(invalid(format!("E|x0| must be nonnegative, got {mean_x0_norm}")));
    }
    let df = d as f64;
    let h = if gamma == 1.0 {
        epsilon / (2.0 * c * df.powf(1.5))
    } else {
        let q = (1.5 * gamma).max(2.0 * gamma - 1.0);
        let a = df.powf(q) / epsilon;
        if !(2.0 * c * a > 1.0) {
            return Err(invalid(format!("ln(2C d^q/eps) must be positive, got ln({})", 2.0 * c * a)));
        }
        1.0 / (4.0 * c * a * (2.0 * c * a).ln())
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("step size underflows: h={h}")));
    }
    let horizon = required_horizon(&input);
    if !(horizon > 0.0) {
        return Err(invalid(format!(
            "ln(2C*|phi|(1+E|x0|)/eps) must be positive, got {}",
            horizon * c_star_rate
        )));
    }
    let mut k = (horizon / h).ceil();
    if !(k.is_finite() && k < u64::MAX as f64) {
        return Err(invalid("iteration count overflows"));
    }
    while k * h < horizon {
        k += 1.0;
    }
    Ok(MixingPlan { input, h, k: k as u64, note: "up to unknown constants" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let p = plan_mixing(MixingInput::new(0.1, 1.0, 1)).unwrap();
        assert!((p.h - 0.05).abs() < 1e-15);
        assert_eq!(p.k, 60);
        assert_eq!(p.k, (20.0 * 20f64.ln()).ceil() as u64);
    }

    #[test]
    fn halving_epsilon_needs_more_iterations() {
        let a = plan_mixing(MixingInput::new(0.1, 1.0, 3)).unwrap();
        let b = plan_mixing(MixingInput::new(0.05, 1.0, 3)).unwrap();
        assert!(b.k > a.k);
    }

    #[test]
    fn superlinear_dimension_scaling() {
        let one = plan_mixing(MixingInput::new(0.1, 3.0, 1)).unwrap();
        let ten = plan_mixing(MixingInput::new(0.1, 3.0, 10)).unwrap();
        let expected = 4.0 * (10f64.powi(5) / 0.1) * (2.0 * 10f64.powi(5) / 0.1).ln();
        assert!((1.0 / ten.h / expected - 1.0).abs() < 1e-12);
        assert!(one.h / ten.h >= 10f64.powf(4.5));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(plan_mixing(MixingInput::new(0.0, 1.0, 1)).is_err());
        assert!(plan_mixing(MixingInput::new(1.0, 1.0, 1)).is_err());
        assert!(plan_mixing(MixingInput::new(0.1, 0.5, 1)).is_err());
        assert!(plan_mixing(MixingInput::new(0.1, 1.0, 0)).is_err());
        let tiny = MixingInput { c_star_upper: 0.01, ..MixingInput::new(0.1, 1.0, 1) };
        assert!(plan_mixing(tiny).is_err());
        let small_c = MixingInput { c: 0.1, ..MixingInput::new(0.5, 3.0, 1) };
        assert!(plan_mixing(small_c).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn plan_meets_horizon(
            eps in 0.001f64..0.999,
            gamma in prop_oneof![Just(1.0), 1.0f64..4.0],
            d in 1usize..50,
            c in 0.5f64..10.0,
            cu in 0.5f64..10.0,
            cr in 0.1f64..10.0,
            x0 in 0.0f64..10.0,
        ) {
            let input = MixingInput { c, c_star_upper: cu, c_star_rate: cr, mean_x0_norm: x0, ..MixingInput::new(eps, gamma, d) };
            let plan = plan_mixing(input).unwrap();
            prop_assert!(plan.h > 0.0);
            prop_assert!(plan.k as f64 * plan.h >= plan.required_horizon());
            prop_assert!(plan.k.saturating_sub(1) as f64 * plan.h < plan.required_horizon() * (1.0 + 1e-12));
        }
    }
}
