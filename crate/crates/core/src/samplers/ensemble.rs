use std::time::{Duration, Instant};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::schemes::{is_diverged, Kernel, Scheme};
use crate::error::{invalid, Result};
use crate::model::{admissible_window, DriftModel};
use crate::randomness::{derive_stream, mix_seed, NoiseStream};

/// Salt separating an uncoupled reference run's streams from the coarse run's.
const REFERENCE_SALT: u64 = 0x5245_4652;

/// Starting point shared by all trajectories.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    #[default]
    Zero,
    Point(Vec<f64>),
}

/// One reproducible run description.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub model: DriftModel,
    pub h: f64,
    pub n_steps: usize,
    pub theta: f64,
    pub x0: InitialState,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Store the whole ensemble every this many steps (plus step 0).
    pub checkpoint_every: Option<usize>,
    /// When set to `h_ref`, each step's noise is the normalized sum of
    /// `h / h_ref` fine Gaussian vectors, so this run shares its Brownian
    /// path with a fine run at `h_ref` under the same seed.
    pub coupled_reference: Option<f64>,
}

impl SamplerConfig {
    /// PLMC run from the origin with ϑ = 1 and no checkpoints.
    pub fn new(scheme: Scheme, model: DriftModel, h: f64, n_steps: usize, n_trajectories: usize, seed: u64) -> Self {
        Self {
            scheme,
            model,
            h,
            n_steps,
            theta: 1.0,
            x0: InitialState::Zero,
            n_trajectories,
            master_seed: seed,
            checkpoint_every: None,
            coupled_reference: None,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(invalid(format!("h must lie in (0, 1), got {}", self.h)));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        if self.n_trajectories == 0 {
            return Err(invalid("n_trajectories must be at least 1"));
        }
        if !(self.theta >= 1.0 && self.theta.is_finite()) {
            return Err(invalid(format!("theta must be >= 1, got {}", self.theta)));
        }
        if let InitialState::Point(x) = &self.x0 {
            if x.len() != self.model.dimension() {
                return Err(invalid(format!(
                    "x0 has dimension {} but the model has {}",
                    x.len(),
                    self.model.dimension()
                )));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(invalid("checkpoint_every must be positive"));
        }
        Ok(())
    }

    /// Number of fine vectors aggregated per step.
    fn substeps(&self) -> Result<usize> {
        match self.coupled_reference {
            None => Ok(1),
            Some(h_ref) => integer_ratio(self.h, h_ref).ok_or_else(|| {
                invalid(format!("coupled run needs h = m·h_ref with integer m, got h={}, h_ref={h_ref}", self.h))
            }),
        }
    }

    fn hash(&self) -> String {
        let text = format!(
            "{}|{}|{}|{:e}|{}|{:e}|{:?}|{}|{}|{:?}|{:?}|{:e}|{:e}|{:?}|{:?}",
            self.scheme,
            self.model.name(),
            self.model.dimension(),
            self.h,
            self.n_steps,
            self.theta,
            self.x0,
            self.n_trajectories,
            self.master_seed,
            self.checkpoint_every,
            self.coupled_reference,
            self.model.a1(),
            self.model.a2(),
            self.model.double_well(),
            self.model.gamma(),
        );
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn start(&self) -> Vec<f64> {
        match &self.x0 {
            InitialState::Zero => vec![0.0; self.model.dimension()],
            InitialState::Point(x) => x.clone(),
        }
    }
}

/// `Some(m)` when `a = m·b` for an integer `m ≥ 1` (up to rounding).
pub(crate) fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    let r = a / b;
    let m = r.round();
    (m >= 1.0 && (r - m).abs() <= 1e-9 * m).then_some(m as usize)
}

/// Full ensemble snapshot at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    /// Row-major `M × d`.
    pub states: Vec<f64>,
}

/// Terminal (and optionally checkpointed) states of `M` trajectories.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub scheme: Scheme,
    pub model_name: String,
    pub dimension: usize,
    pub h: f64,
    pub n_steps: usize,
    pub master_seed: u64,
    /// Step size of the Gaussian vectors actually drawn; runs with equal seed
    /// and equal `noise_step` share Brownian paths.
    pub noise_step: f64,
    pub config_hash: String,
    pub wall_clock: Duration,
    pub steps_taken: u64,
    states: Vec<f64>,
    checkpoints: Vec<Checkpoint>,
    diverged_at: Vec<Option<usize>>,
}

impl Ensemble {
    /// Wraps externally produced samples (row-major `M × d`) as an ensemble at
    /// time `h·n_steps`; useful for feeding estimators.
    pub fn from_states(dimension: usize, states: Vec<f64>, h: f64, n_steps: usize) -> Result<Self> {
        if dimension == 0 || states.is_empty() || !states.len().is_multiple_of(dimension) {
            return Err(invalid("states must be a non-empty M × d array"));
        }
        let m = states.len() / dimension;
        let diverged_at = states
            .chunks_exact(dimension)
            .map(|row| is_diverged(row).then_some(0))
            .collect();
        Ok(Self {
            scheme: Scheme::Plmc,
            model_name: "external".into(),
            dimension,
            h,
            n_steps,
            master_seed: 0,
            noise_step: f64::NAN,
            config_hash: String::new(),
            wall_clock: Duration::ZERO,
            steps_taken: (m * n_steps) as u64,
            states,
            checkpoints: Vec::new(),
            diverged_at,
        })
    }

    pub fn len(&self) -> usize {
        self.diverged_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diverged_at.is_empty()
    }

    /// Physical time `N·h`.
    pub fn time(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dimension)
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn diverged_at(&self, i: usize) -> Option<usize> {
        self.diverged_at[i]
    }

    pub fn is_flagged(&self) -> bool {
        self.diverged_at.iter().any(Option::is_some)
    }

    pub fn divergence_count(&self) -> usize {
        self.diverged_at.iter().filter(|d| d.is_some()).count()
    }

    /// `(trajectory, first diverged step)` pairs in trajectory order.
    pub fn divergences(&self) -> Vec<(usize, usize)> {
        self.diverged_at
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|s| (i, s)))
            .collect()
    }

    /// Terminal states after one more projection `P(Y_N)`.
    pub fn projected_states(&self, gamma: f64, theta: f64) -> Vec<f64> {
        if gamma == 1.0 {
            return self.states.clone();
        }
        let cap = theta * (self.dimension as f64 / self.h).powf(1.0 / (2.0 * gamma));
        let mut out = vec![0.0; self.states.len()];
        for (src, dst) in self.states.chunks_exact(self.dimension).zip(out.chunks_exact_mut(self.dimension)) {
            super::projection::project_with_cap(src, cap, dst);
        }
        out
    }

    /// Samples of coordinate `k` of the non-diverged terminal states.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.rows()
            .zip(&self.diverged_at)
            .filter(|(_, d)| d.is_none())
            .map(|(row, _)| row[k])
            .collect()
    }
}

struct TrajectoryResult {
    terminal: Vec<f64>,
    checkpoints: Vec<Vec<f64>>,
    diverged_at: Option<usize>,
}

fn checkpoint_steps(n_steps: usize, every: Option<usize>) -> Vec<usize> {
    match every {
        None => Vec::new(),
        Some(c) => (0..=n_steps).step_by(c).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    kernel: Kernel,
    model: &DriftModel,
    start: &[f64],
    h: f64,
    n_steps: usize,
    substeps: usize,
    mut stream: NoiseStream,
    checkpoint_every: Option<usize>,
) -> TrajectoryResult {
    let d = start.len();
    let sqrt_2h = (2.0 * h).sqrt();
    let inv_sqrt_m = 1.0 / (substeps as f64).sqrt();
    let mut y = start.to_vec();
    let mut xi = vec![0.0; d];
    let mut fine = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut checkpoints = Vec::new();
    let mut diverged_at = is_diverged(&y).then_some(0);
    if checkpoint_every.is_some() {
        checkpoints.push(y.clone());
    }
    for n in 1..=n_steps {
        if diverged_at.is_none() {
            if substeps == 1 {
                stream.fill_gaussian(&mut xi);
            } else {
                xi.iter_mut().for_each(|v| *v = 0.0);
                for _ in 0..substeps {
                    stream.fill_gaussian(&mut fine);
                    for (a, b) in xi.iter_mut().zip(&fine) {
                        *a += b;
                    }
                }
                xi.iter_mut().for_each(|v| *v *= inv_sqrt_m);
            }
            if !kernel.step(model, &mut y, h, sqrt_2h, &xi, &mut buf, &mut drift) {
                diverged_at = Some(n);
            }
        }
        if let Some(c) = checkpoint_every {
            if n % c == 0 {
                checkpoints.push(y.clone());
            }
        }
    }
    TrajectoryResult { terminal: y, checkpoints, diverged_at }
}

/// Advances `M` trajectories `N` steps; trajectory `i` is driven by
/// `derive_stream(seed, i)`. The result does not depend on the number of
/// rayon workers.
pub fn run_ensemble(config: &SamplerConfig) -> Result<Ensemble> {
    config.validate()?;
    let substeps = config.substeps()?;
    let kernel = Kernel::new(config.scheme, &config.model, config.h, config.theta)?;
    if matches!(config.scheme, Scheme::Plmc | Scheme::Reference) {
        if let Some(cf) = config.model.cf() {
            let h_max = admissible_window(config.model.a1(), cf);
            if config.h >= h_max {
                log::warn!("h = {} is outside the admissible window (0, {h_max})", config.h);
            }
        }
    }
    let started = Instant::now();
    let start = config.start();
    let results: Vec<TrajectoryResult> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| {
            run_trajectory(
                kernel,
                &config.model,
                &start,
                config.h,
                config.n_steps,
                substeps,
                derive_stream(config.master_seed, i as u64),
                config.checkpoint_every,
            )
        })
        .collect();

    let d = config.model.dimension();
    let steps = checkpoint_steps(config.n_steps, config.checkpoint_every);
    let mut checkpoints: Vec<Checkpoint> = steps
        .iter()
        .map(|&step| Checkpoint { step, states: Vec::with_capacity(config.n_trajectories * d) })
        .collect();
    let mut states = Vec::with_capacity(config.n_trajectories * d);
    let mut diverged_at = Vec::with_capacity(config.n_trajectories);
    for r in results {
        states.extend_from_slice(&r.terminal);
        diverged_at.push(r.diverged_at);
        for (cp, s) in checkpoints.iter_mut().zip(r.checkpoints) {
            cp.states.extend_from_slice(&s);
        }
    }
    let noise_step = config.coupled_reference.unwrap_or(config.h);
    Ok(Ensemble {
        scheme: config.scheme,
        model_name: config.model.name().to_string(),
        dimension: d,
        h: config.h,
        n_steps: config.n_steps,
        master_seed: config.master_seed,
        noise_step,
        config_hash: config.hash(),
        wall_clock: started.elapsed(),
        steps_taken: (config.n_trajectories * config.n_steps) as u64,
        states,
        checkpoints,
        diverged_at,
    })
}

/// Fine-step PLMC run at `h_ref` to the same horizon `N·h`.
///
/// When `config.coupled_reference` is set the reference uses the same seed,
/// so it consumes exactly the fine vectors the coarse run aggregates;
/// otherwise its streams come from an independent derived seed.
pub fn run_reference(config: &SamplerConfig, h_ref: f64) -> Result<Ensemble> {
    config.validate()?;
    if !(h_ref > 0.0 && h_ref < 1.0) {
        return Err(invalid(format!("h_ref must lie in (0, 1), got {h_ref}")));
    }
    let coupled = config.coupled_reference.is_some();
    if let Some(c) = config.coupled_reference {
        if integer_ratio(c, h_ref) != Some(1) {
            return Err(invalid(format!("coupled run was built for h_ref={c}, not {h_ref}")));
        }
    }
    let ratio = integer_ratio(config.h, h_ref);
    let n_steps = match ratio {
        Some(m) => config.n_steps * m,
        None if coupled => {
            return Err(invalid(format!("h={} is not an integer multiple of h_ref={h_ref}", config.h)));
        }
        None => integer_ratio(config.horizon(), h_ref)
            .ok_or_else(|| invalid(format!("horizon {} is not a multiple of h_ref={h_ref}", config.horizon())))?,
    };
    let seed = if coupled { config.master_seed } else { mix_seed(config.master_seed, REFERENCE_SALT) };
    let fine = SamplerConfig {
        scheme: Scheme::Reference,
        h: h_ref,
        n_steps,
        master_seed: seed,
        coupled_reference: None,
        checkpoint_every: match (config.checkpoint_every, ratio) {
            (Some(c), Some(m)) => Some(c * m),
            _ => None,
        },
        ..config.clone()
    };
    run_ensemble(&fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_double_well, make_ou};
    use crate::samplers::{lmc_step, plmc_step};

    fn dw_config(h: f64, n: usize, m: usize) -> SamplerConfig {
        SamplerConfig::new(Scheme::Plmc, make_double_well(1.0, 1.0, 3).unwrap(), h, n, m, 42)
    }

    #[test]
    fn single_step_matches_kernel() {
        let mut cfg = dw_config(0.1, 1, 1);
        cfg.x0 = InitialState::Point(vec![3.0, -1.0, 2.0]);
        let ens = run_ensemble(&cfg).unwrap();
        let xi = derive_stream(42, 0).next_gaussian_vector(3);
        let expect = plmc_step(&[3.0, -1.0, 2.0], &cfg.model, 0.1, 1.0, &xi).unwrap();
        assert_eq!(ens.state(0), expect.as_slice());
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = dw_config(0.05, 50, 64);
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.config_hash, b.config_hash);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let cfg = dw_config(0.05, 40, 100);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(7).build().unwrap();
        let a = serial.install(|| run_ensemble(&cfg)).unwrap();
        let b = wide.install(|| run_ensemble(&cfg)).unwrap();
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn trajectory_prefix_is_stable_under_more_trajectories() {
        let small = run_ensemble(&dw_config(0.05, 20, 10)).unwrap();
        let big = run_ensemble(&dw_config(0.05, 20, 30)).unwrap();
        assert_eq!(small.states(), &big.states()[..small.states().len()]);
    }

    #[test]
    fn coupled_reference_with_equal_step_is_the_same_run() {
        let mut cfg = dw_config(0.0625, 16, 20);
        cfg.coupled_reference = Some(0.0625);
        let coarse = run_ensemble(&cfg).unwrap();
        let fine = run_reference(&cfg, 0.0625).unwrap();
        assert_eq!(coarse.states(), fine.states());
    }

    #[test]
    fn coupled_increments_aggregate_fine_noise() {
        let model = make_ou(2).unwrap();
        let mut cfg = SamplerConfig::new(Scheme::Lmc, model.clone(), 0.25, 1, 1, 5);
        cfg.coupled_reference = Some(0.125);
        let ens = run_ensemble(&cfg).unwrap();
        let mut s = derive_stream(5, 0);
        let a = s.next_gaussian_vector(2);
        let b = s.next_gaussian_vector(2);
        let xi: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) * (1.0 / 2f64.sqrt())).collect();
        let expect = lmc_step(&[0.0, 0.0], &model, 0.25, &xi).unwrap();
        assert_eq!(ens.state(0), expect.as_slice());
    }

    #[test]
    fn coupling_requires_integer_ratio() {
        let mut cfg = dw_config(0.1, 10, 2);
        cfg.coupled_reference = Some(0.03);
        assert!(run_ensemble(&cfg).is_err());
        let mut cfg = dw_config(0.1, 10, 2);
        cfg.coupled_reference = Some(0.05);
        assert!(run_reference(&cfg, 0.03).is_err());
    }

    #[test]
    fn uncoupled_reference_uses_other_streams() {
        let cfg = dw_config(0.0625, 16, 20);
        let fine = run_reference(&cfg, 0.0625).unwrap();
        let coarse = run_ensemble(&cfg).unwrap();
        assert_ne!(coarse.states(), fine.states());
        assert_eq!(fine.n_steps, 16);
        let finer = run_reference(&cfg, 0.03125).unwrap();
        assert_eq!(finer.n_steps, 32);
        assert!((finer.time() - coarse.time()).abs() < 1e-12);
    }

    #[test]
    fn checkpoints_follow_cadence() {
        let mut cfg = dw_config(0.1, 10, 4);
        cfg.checkpoint_every = Some(5);
        let ens = run_ensemble(&cfg).unwrap();
        let steps: Vec<usize> = ens.checkpoints().iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![0, 5, 10]);
        assert_eq!(ens.checkpoints()[2].states, ens.states());
        assert!(ens.checkpoints()[0].states.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lmc_divergence_is_flagged_and_others_continue() {
        let model = make_double_well(1.0, 1.0, 4).unwrap();
        let mut cfg = SamplerConfig::new(Scheme::Lmc, model, 0.125, 100, 20, 3);
        cfg.x0 = InitialState::Point(vec![10.0; 4]);
        let ens = run_ensemble(&cfg).unwrap();
        assert!(ens.is_flagged());
        assert_eq!(ens.divergence_count(), 20);
        assert!(ens.divergences().iter().all(|(_, s)| *s >= 1 && *s <= 100));
        let mut projected = cfg.clone();
        projected.scheme = Scheme::Plmc;
        let ok = run_ensemble(&projected).unwrap();
        assert!(!ok.is_flagged());
        assert!(ok.states().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_ensemble(&dw_config(1.0, 1, 1)).is_err());
        assert!(run_ensemble(&dw_config(0.1, 0, 1)).is_err());
        assert!(run_ensemble(&dw_config(0.1, 1, 0)).is_err());
        let mut cfg = dw_config(0.1, 1, 1);
        cfg.x0 = InitialState::Point(vec![1.0]);
        assert!(run_ensemble(&cfg).is_err());
        let mut cfg = SamplerConfig::new(Scheme::Mtlmc, make_ou(2).unwrap(), 0.1, 1, 1, 0);
        assert!(run_ensemble(&cfg).is_err());
        cfg.scheme = Scheme::Lmc;
        assert!(run_ensemble(&cfg).is_ok());
    }

    #[test]
    fn integer_ratios() {
        assert_eq!(integer_ratio(2f64.powi(-5), 2f64.powi(-11)), Some(64));
        assert_eq!(integer_ratio(0.1, 0.05), Some(2));
        assert_eq!(integer_ratio(0.1, 0.03), None);
        assert_eq!(integer_ratio(0.01, 0.1), None);
    }

    #[test]
    fn projected_terminal_states() {
        let model = make_double_well(1.0, 1.0, 2).unwrap();
        let ens = Ensemble::from_states(2, vec![30.0, 40.0, 0.1, 0.0], 0.5, 1).unwrap();
        let p = ens.projected_states(model.gamma(), 1.0);
        let cap = (2.0f64 / 0.5).powf(1.0 / 6.0);
        assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - cap).abs() < 1e-12);
        assert_eq!(&p[2..], &[0.1, 0.0]);
    }
}
