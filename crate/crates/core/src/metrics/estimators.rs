use serde::Serialize;

use super::test_functions::{TestFunction, TestFunctionId};
use crate::error::{invalid, Error, Result};
use crate::linalg::{norm_sq, pairwise_sum};
use crate::samplers::Ensemble;

/// Sample mean of `φ` with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expectation {
    pub mean: f64,
    pub std_error: f64,
    /// Trajectories that entered the estimate.
    pub used: usize,
    /// Diverged trajectories left out.
    pub excluded: usize,
}

/// Mean and standard error of a sample; the standard error of a single value
/// is 0 by convention.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `E[φ(Y_N)]` over the non-diverged trajectories.
pub fn estimate_expectation(ensemble: &Ensemble, phi: &TestFunction) -> Result<Expectation> {
    let values: Vec<f64> = ensemble
        .rows()
        .enumerate()
        .filter(|(i, _)| ensemble.diverged_at(*i).is_none())
        .map(|(_, row)| phi.eval(row))
        .collect();
    if values.is_empty() {
        return Err(Error::Estimation("no finite trajectories in ensemble".into()));
    }
    let (mean, std_error) = mean_and_se(&values);
    Ok(Expectation { mean, std_error, used: values.len(), excluded: ensemble.len() - values.len() })
}

/// One weak-error measurement `|E φ(Y_N) - E φ(X_T)|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub phi: TestFunctionId,
    pub h: f64,
    pub d: usize,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub std_error: f64,
    /// True when the estimate came from per-trajectory differences of
    /// ensembles sharing their Brownian paths.
    pub paired: bool,
}

fn shares_noise(a: &Ensemble, b: &Ensemble) -> bool {
    a.len() == b.len()
        && a.master_seed == b.master_seed
        && a.noise_step.is_finite()
        && a.noise_step == b.noise_step
}

/// Weak error of `coarse` against `reference` at the same physical time.
///
/// Coupled ensembles (same seed, same fine noise step) are differenced per
/// trajectory, which gives the standard error of the difference directly;
/// otherwise the two standard errors are combined in quadrature.
pub fn weak_error(coarse: &Ensemble, reference: &Ensemble, phi: &TestFunction) -> Result<ErrorRecord> {
    let (ta, tb) = (coarse.time(), reference.time());
    if (ta - tb).abs() > 1e-9 * ta.abs().max(tb.abs()).max(1.0) {
        return Err(invalid(format!("time mismatch: coarse at T={ta}, reference at T={tb}")));
    }
    if coarse.dimension != reference.dimension {
        return Err(invalid("ensembles have different dimensions"));
    }
    let record = |estimate: f64, reference_value: f64, std_error: f64, paired: bool| ErrorRecord {
        phi: phi.id(),
        h: coarse.h,
        d: coarse.dimension,
        estimate,
        reference: reference_value,
        abs_error: (estimate - reference_value).abs(),
        std_error,
        paired,
    };
    if shares_noise(coarse, reference) {
        let mut a = Vec::with_capacity(coarse.len());
        let mut b = Vec::with_capacity(coarse.len());
        for i in 0..coarse.len() {
            if coarse.diverged_at(i).is_none() && reference.diverged_at(i).is_none() {
                a.push(phi.eval(coarse.state(i)));
                b.push(phi.eval(reference.state(i)));
            }
        }
        if a.is_empty() {
            return Err(Error::Estimation("no trajectory is finite in both ensembles".into()));
        }
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let n = a.len() as f64;
        let (_, se) = mean_and_se(&diffs);
        return Ok(record(pairwise_sum(&a) / n, pairwise_sum(&b) / n, se, true));
    }
    let ea = estimate_expectation(coarse, phi)?;
    let eb = estimate_expectation(reference, phi)?;
    Ok(record(ea.mean, eb.mean, ea.std_error.hypot(eb.std_error), false))
}

/// `max_φ |E_a φ - E_b φ|` over the given test functions, each rescaled to
/// sup-norm at most 1. A lower bound on the total variation distance in the
/// `sup_{‖φ‖₀ ≤ 1}` normalization (range `[0, 2]`).
pub fn tv_lower_bound(ens_a: &Ensemble, ens_b: &Ensemble, phis: &[TestFunction]) -> Result<f64> {
    if phis.is_empty() {
        return Err(invalid("at least one test function is required"));
    }
    if ens_a.dimension != ens_b.dimension {
        return Err(invalid("ensembles have different dimensions"));
    }
    let mut best = 0.0f64;
    for phi in phis {
        let scale = 1.0 / phi.sup_norm().max(1.0);
        let a = estimate_expectation(ens_a, phi)?.mean;
        let b = estimate_expectation(ens_b, phi)?.mean;
        best = best.max(scale * (a - b).abs());
    }
    Ok(best)
}

/// Per-checkpoint mean of `g(Y_n)` over trajectories that never diverged.
pub fn checkpoint_curve<G>(ensemble: &Ensemble, g: G) -> Result<Vec<(usize, f64)>>
where
    G: Fn(&[f64]) -> f64,
{
    if ensemble.checkpoints().is_empty() {
        return Err(invalid("ensemble has no checkpoints"));
    }
    let d = ensemble.dimension;
    let keep: Vec<usize> = (0..ensemble.len()).filter(|&i| ensemble.diverged_at(i).is_none()).collect();
    if keep.is_empty() {
        return Err(Error::Estimation("all trajectories diverged".into()));
    }
    Ok(ensemble
        .checkpoints()
        .iter()
        .map(|cp| {
            let vals: Vec<f64> = keep.iter().map(|&i| g(&cp.states[i * d..(i + 1) * d])).collect();
            (cp.step, pairwise_sum(&vals) / vals.len() as f64)
        })
        .collect())
}

/// Empirical `E‖Y_n‖^{2p}` at every checkpoint.
pub fn moment_curve(ensemble: &Ensemble, p: u32) -> Result<Vec<(usize, f64)>> {
    if p == 0 {
        return Err(invalid("p must be at least 1"));
    }
    checkpoint_curve(ensemble, |y| norm_sq(y).powi(p as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::make_test_function;

    fn ens(d: usize, states: Vec<f64>) -> Ensemble {
        Ensemble::from_states(d, states, 0.5, 4).unwrap()
    }

    #[test]
    fn constant_function_has_zero_error() {
        let e = ens(2, vec![0.3, 1.0, -2.0, 5.0, 0.0, 0.0]);
        let c = TestFunction::constant(0.75).unwrap();
        let x = estimate_expectation(&e, &c).unwrap();
        assert_eq!((x.mean, x.std_error), (0.75, 0.0));
        let err = weak_error(&e, &e, &c).unwrap();
        assert_eq!(err.abs_error, 0.0);
    }

    #[test]
    fn single_trajectory() {
        let e = ens(2, vec![0.25, 0.0]);
        let phi = make_test_function(TestFunctionId::Phi1).unwrap();
        let x = estimate_expectation(&e, &phi).unwrap();
        assert_eq!((x.mean, x.std_error), (1.0, 0.0));
    }

    #[test]
    fn phi1_vanishes_on_unit_sphere() {
        let mut states = Vec::new();
        for k in 0..100 {
            let t = k as f64 * 0.0628;
            states.extend_from_slice(&[t.cos(), t.sin()]);
        }
        let phi = make_test_function(TestFunctionId::Phi1).unwrap();
        assert_eq!(estimate_expectation(&ens(2, states), &phi).unwrap().mean, 0.0);
    }

    #[test]
    fn diverged_rows_are_excluded() {
        let e = ens(1, vec![0.25, f64::NAN, 0.25]);
        let phi = make_test_function(TestFunctionId::Phi1).unwrap();
        let x = estimate_expectation(&e, &phi).unwrap();
        assert_eq!((x.mean, x.used, x.excluded), (1.0, 2, 1));
        let all_bad = ens(1, vec![f64::INFINITY]);
        assert!(matches!(estimate_expectation(&all_bad, &phi), Err(Error::Estimation(_))));
    }

    #[test]
    fn weak_error_rejects_time_mismatch() {
        let a = Ensemble::from_states(1, vec![0.0], 0.5, 4).unwrap();
        let b = Ensemble::from_states(1, vec![0.0], 0.25, 4).unwrap();
        let phi = make_test_function(TestFunctionId::Phi1).unwrap();
        assert!(matches!(weak_error(&a, &b, &phi), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn tv_bound_cases() {
        let a = ens(1, vec![0.25, 0.25]);
        let b = ens(1, vec![5.0, 5.0]);
        let phis: Vec<TestFunction> = crate::metrics::STANDARD_TEST_FUNCTIONS
            .iter()
            .map(|id| make_test_function(*id).unwrap())
            .collect();
        assert_eq!(tv_lower_bound(&a, &a, &phis).unwrap(), 0.0);
        assert_eq!(tv_lower_bound(&a, &b, &[TestFunction::constant(1.0).unwrap()]).unwrap(), 0.0);
        assert!(tv_lower_bound(&a, &b, &[]).is_err());
        // PHI1 separates the two point masses completely.
        let tv = tv_lower_bound(&a, &b, &phis).unwrap();
        assert_eq!(tv, 1.0);
        // arctan is rescaled by 2/π.
        let atan = [make_test_function(TestFunctionId::AtanNorm).unwrap()];
        let raw = (5f64.atan() - 0.25f64.atan()).abs();
        assert!((tv_lower_bound(&a, &b, &atan).unwrap() - raw * 2.0 / std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn moment_curve_needs_checkpoints() {
        let e = ens(1, vec![0.0]);
        assert!(moment_curve(&e, 1).is_err());
    }
}
