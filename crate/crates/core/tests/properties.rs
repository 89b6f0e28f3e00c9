use std::sync::Arc;

use plmc_core::metrics::{
    fit_order, ks_statistic, make_test_function, tv_lower_bound, TestFunction, TestFunctionId,
    STANDARD_TEST_FUNCTIONS,
};
use plmc_core::samplers::project;
use plmc_core::{derive_stream, estimate_expectation, plan_mixing, Ensemble, MixingInput, ProjectionParams};
use proptest::prelude::*;

fn rotate_plane(x: &[f64], i: usize, j: usize, angle: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    let (s, c) = angle.sin_cos();
    y[i] = c * x[i] - s * x[j];
    y[j] = s * x[i] + c * x[j];
    y
}

fn ensemble(d: usize, values: &[f64]) -> Ensemble {
    Ensemble::from_states(d, values.to_vec(), 0.1, 1).unwrap()
}

proptest! {
    #[test]
    fn order_fit_is_scale_invariant(
        slope in 0.2f64..3.0,
        scale in 1e-6f64..1e3,
        noise in prop::collection::vec(-0.2f64..0.2, 5),
    ) {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|k| {
                let h = 2f64.powi(-(k as i32) - 3);
                (h, h.powf(slope) * noise[k].exp())
            })
            .collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h, e * scale)).collect();
        let a = fit_order(&pts).unwrap();
        let b = fit_order(&scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
        prop_assert!((a.residual_rms - b.residual_rms).abs() < 1e-9);
    }

    #[test]
    fn exact_power_laws_recover_exponent(slope in -2.0f64..3.0, c in 1e-4f64..1e2) {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 50.0, 100.0].iter().map(|&d: &f64| (d, c * d.powf(slope))).collect();
        let fit = fit_order(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn radial_functions_ignore_rotations(
        x in prop::collection::vec(-5.0f64..5.0, 2..12),
        angle in -3.2f64..3.2,
    ) {
        let d = x.len();
        let y = rotate_plane(&x, 0, d - 1, angle);
        for id in [TestFunctionId::Phi1, TestFunctionId::Phi2, TestFunctionId::ExpNegNorm, TestFunctionId::AtanNorm] {
            let f = make_test_function(id).unwrap();
            prop_assert!(f.is_radial());
            let (a, b) = (f.eval(&x), f.eval(&y));
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Step functions may flip when rounding moves the norm across a breakpoint.
            let near_break = (0..=8).any(|k| (nx - 0.5 * k as f64).abs() < 1e-9);
            if !near_break {
                prop_assert!((a - b).abs() < 1e-12, "{id:?} {a} {b}");
            }
        }
    }

    #[test]
    fn estimates_respect_sup_norm(values in prop::collection::vec(-20.0f64..20.0, 3..120)) {
        let d = 3;
        let n = values.len() / d * d;
        prop_assume!(n > 0);
        let ens = ensemble(d, &values[..n]);
        for id in STANDARD_TEST_FUNCTIONS.iter() {
            let f = make_test_function(*id).unwrap();
            let e = estimate_expectation(&ens, &f).unwrap();
            prop_assert!(e.mean.abs() <= f.sup_norm() + 1e-12);
        }
    }

    #[test]
    fn tv_bound_in_range(
        a in prop::collection::vec(-6.0f64..6.0, 4..80),
        b in prop::collection::vec(-6.0f64..6.0, 4..80),
    ) {
        let d = 2;
        let ea = ensemble(d, &a[..a.len() / d * d]);
        let eb = ensemble(d, &b[..b.len() / d * d]);
        let phis: Vec<TestFunction> = STANDARD_TEST_FUNCTIONS.iter().map(|id| make_test_function(*id).unwrap()).collect();
        let tv = tv_lower_bound(&ea, &eb, &phis).unwrap();
        prop_assert!((0.0..=2.0).contains(&tv));
        prop_assert_eq!(tv_lower_bound(&ea, &ea, &phis).unwrap(), 0.0);
    }

    #[test]
    fn ks_is_symmetric_and_bounded(
        a in prop::collection::vec(-3.0f64..3.0, 1..60),
        b in prop::collection::vec(-3.0f64..3.0, 1..60),
    ) {
        let ab = ks_statistic(&a, &b).unwrap();
        let ba = ks_statistic(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn projection_is_nonexpansive(
        gamma in 1.0f64..4.0,
        d in 1usize..20,
        k in 1i32..10,
        seed in any::<u64>(),
    ) {
        let h = 2f64.powi(-k);
        let p = ProjectionParams::new(gamma, 1.0, d, h).unwrap();
        let mut s = derive_stream(seed, 0);
        let scale = if p.cap_radius().is_finite() { 3.0 * p.cap_radius() } else { 10.0 };
        let x: Vec<f64> = s.next_gaussian_vector(d).iter().map(|v| v * scale).collect();
        let y: Vec<f64> = s.next_gaussian_vector(d).iter().map(|v| v * scale).collect();
        let (px, py) = (project(&x, &p), project(&y, &p));
        let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
        prop_assert_eq!(project(&px, &p), px);
    }

    #[test]
    fn smaller_epsilon_needs_more_iterations(eps in 0.002f64..0.99, gamma in 1.0f64..3.5, d in 1usize..30) {
        let a = plan_mixing(MixingInput::new(eps, gamma, d)).unwrap();
        let b = plan_mixing(MixingInput::new(eps / 2.0, gamma, d)).unwrap();
        prop_assert!(b.k > a.k);
        prop_assert!(a.k as f64 * a.h >= a.required_horizon());
    }
}

#[test]
fn test_functions_bounded_on_random_inputs() {
    let mut s = derive_stream(99, 0);
    let user = TestFunction::user(1.0, Arc::new(|x: &[f64]| x[0].tanh())).unwrap();
    let mut all: Vec<TestFunction> =
        STANDARD_TEST_FUNCTIONS.iter().map(|id| make_test_function(*id).unwrap()).collect();
    all.push(make_test_function(TestFunctionId::Const).unwrap());
    all.push(user);
    for _ in 0..10_000 {
        let r = 6.0 * s.next_uniform();
        let x: Vec<f64> = s.next_gaussian_vector(5).iter().map(|v| v * r).collect();
        for f in &all {
            assert!(f.eval(&x).abs() <= f.sup_norm(), "{:?}", f.id());
        }
    }
}
