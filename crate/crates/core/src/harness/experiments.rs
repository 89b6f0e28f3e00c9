use std::time::Instant;

use super::report::{DivergenceRow, ExperimentReport, HistRow, KsRow, OrderRow, ReportRow, TvRow};
use super::{ExperimentKind, ExperimentSpec};
use crate::error::{invalid, Result};
use crate::metrics::{
    estimate_expectation, fit_order, histogram, ks_statistic, make_test_function, tv_lower_bound, weak_error,
    TestFunction, STANDARD_TEST_FUNCTIONS,
};
use crate::samplers::{integer_ratio, run_ensemble, run_reference, Ensemble, SamplerConfig, Scheme};

/// A cell is marked failed when more than this fraction of its trajectories
/// diverged.
pub const DIVERGENCE_BUDGET: f64 = 0.01;

const DENSITY_BINS: usize = 80;

fn standard_functions() -> Vec<TestFunction> {
    STANDARD_TEST_FUNCTIONS
        .iter()
        .map(|id| make_test_function(*id).expect("built-in test function"))
        .collect()
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(invalid(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    spec.validate()
}

fn base_meta(report: &mut ExperimentReport, spec: &ExperimentSpec) {
    let (alpha, beta) = spec.model.alpha_beta();
    report.set("model", spec.model.name());
    report.set("alpha", alpha);
    report.set("beta", beta);
    report.set("seed", spec.seed);
    report.set("trajectories", spec.n_traj);
    report.set("T", spec.t_final);
    report.set("theta", spec.theta);
    report.set(
        "h_grid",
        spec.h_grid.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" "),
    );
    report.set("dims", spec.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
}

fn error_meta(report: &mut ExperimentReport, spec: &ExperimentSpec) {
    report.set("h_ref", spec.h_ref);
    report.set("reference", if spec.coupled { "coupled" } else { "independent" });
    report.set("phi2_gap_fill", "[5/2,3) -> 1/4");
    report.set("atan_norm", "raw in rows; scaled by 2/pi in tv_paper_convention");
}

fn coarse_config(spec: &ExperimentSpec, scheme: Scheme, d: usize, h: f64, n_steps: usize) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig::new(scheme, spec.model.build(d)?, h, n_steps, spec.n_traj, spec.seed);
    cfg.theta = spec.theta;
    if spec.coupled {
        cfg.coupled_reference = Some(spec.h_ref);
    }
    Ok(cfg)
}

fn check_reference_step(spec: &ExperimentSpec) -> Result<()> {
    if !(spec.h_ref > 0.0 && spec.h_ref < 1.0) {
        return Err(invalid(format!("h_ref must lie in (0, 1), got {}", spec.h_ref)));
    }
    if let Some(h) = spec.h_grid.iter().find(|h| **h < spec.h_ref) {
        return Err(invalid(format!("h_ref={} is coarser than h={h}", spec.h_ref)));
    }
    if spec.coupled {
        if let Some(h) = spec.h_grid.iter().find(|h| integer_ratio(**h, spec.h_ref).is_none()) {
            return Err(invalid(format!("h={h} is not an integer multiple of h_ref={}", spec.h_ref)));
        }
    }
    Ok(())
}

fn divergence_row(ens: &Ensemble) -> DivergenceRow {
    let diverged = ens.divergence_count();
    DivergenceRow {
        scheme: ens.scheme.to_string(),
        d: ens.dimension,
        h: ens.h,
        diverged,
        total: ens.len(),
        failed: diverged as f64 > DIVERGENCE_BUDGET * ens.len() as f64,
    }
}

/// Weak errors of the coarse runs against one fine reference per dimension.
/// Returns the rows for each `(d, h, φ)` in loop order.
fn error_cells(
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
    cells: &[(usize, f64, usize)],
) -> Result<Vec<ReportRow>> {
    let phis = standard_functions();
    let (alpha, beta) = spec.model.alpha_beta();
    let mut rows = Vec::new();
    let mut reference: Option<(usize, Ensemble)> = None;
    for &(d, h, n_steps) in cells {
        let cfg = coarse_config(spec, Scheme::Plmc, d, h, n_steps)?;
        if reference.as_ref().map(|(rd, _)| *rd) != Some(d) {
            let fine = run_reference(&cfg, spec.h_ref)?;
            report.divergences.push(divergence_row(&fine));
            reference = Some((d, fine));
        }
        let fine = &reference.as_ref().expect("reference computed above").1;
        let coarse = run_ensemble(&cfg)?;
        report.divergences.push(divergence_row(&coarse));
        for phi in &phis {
            let rec = weak_error(&coarse, fine, phi)?;
            rows.push(ReportRow::from_record(Scheme::Plmc.as_str(), spec.model.name(), alpha, beta, &rec));
        }
        report.tv.push(TvRow { d, h, tv_paper_convention: tv_lower_bound(&coarse, fine, &phis)? });
    }
    Ok(rows)
}

fn fit_rows(rows: &[ReportRow], label: impl Fn(&ReportRow) -> String, x: impl Fn(&ReportRow) -> f64) -> Vec<OrderRow> {
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let key = label(r);
        let point = (x(r), r.abs_error.unwrap_or(0.0));
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(point),
            None => groups.push((key, vec![point])),
        }
    }
    groups
        .into_iter()
        .filter(|g| g.1.len() >= 2)
        .filter_map(|(label, pts)| match fit_order(&pts) {
            Ok(fit) => Some(OrderRow { label, fit }),
            Err(e) => {
                log::warn!("order fit for {label} skipped: {e}");
                None
            }
        })
        .collect()
}

/// Weak-error convergence study: PLMC at every `h` of the grid against a
/// fine-step reference, four test functions, order fitted per φ (and per d
/// when several dimensions are given).
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    expect_kind(spec, ExperimentKind::Converge)?;
    check_reference_step(spec)?;
    let started = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Converge);
    base_meta(&mut report, spec);
    error_meta(&mut report, spec);
    let mut cells = Vec::new();
    for &d in &spec.dims {
        for &h in &spec.h_grid {
            cells.push((d, h, spec.steps_for(h)?));
        }
    }
    let rows = error_cells(spec, &mut report, &cells)?;
    let multi = spec.dims.len() > 1;
    report.orders = fit_rows(
        &rows,
        |r| if multi { format!("{}@d={}", r.phi, r.d) } else { r.phi.clone() },
        |r| r.h,
    );
    report.rows = rows;
    report.runtime = started.elapsed();
    Ok(report)
}

/// Dimension dependence: fixed `h` (first grid entry) and `T/h` iterations,
/// errors per φ across `dims`, slope of `ln error` against `ln d`.
pub fn run_dimdep(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    expect_kind(spec, ExperimentKind::Dimdep)?;
    check_reference_step(spec)?;
    let started = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Dimdep);
    base_meta(&mut report, spec);
    error_meta(&mut report, spec);
    let h = spec.h_grid[0];
    let n_steps = spec.steps_for(h)?;
    report.set("iterations", n_steps);
    let cells: Vec<(usize, f64, usize)> = spec.dims.iter().map(|&d| (d, h, n_steps)).collect();
    let rows = error_cells(spec, &mut report, &cells)?;
    report.orders = fit_rows(&rows, |r| r.phi.clone(), |r| r.d as f64);
    report.rows = rows;
    report.runtime = started.elapsed();
    Ok(report)
}

/// Density agreement: PLMC against `compare_scheme` (MTLMC by default) at
/// the first grid step, driven by the same noise. Emits 80-bin histograms of
/// the first coordinate over the pooled range and the two-sample KS statistic.
pub fn run_density(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    expect_kind(spec, ExperimentKind::Density)?;
    let started = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Density);
    base_meta(&mut report, spec);
    let d = spec.dims[0];
    let h = spec.h_grid[0];
    let n_steps = spec.steps_for(h)?;
    let build = |scheme: Scheme| -> Result<Ensemble> {
        let mut cfg = SamplerConfig::new(scheme, spec.model.build(d)?, h, n_steps, spec.n_traj, spec.seed);
        cfg.theta = spec.theta;
        run_ensemble(&cfg)
    };
    let first = build(Scheme::Plmc)?;
    let second = build(spec.compare_scheme)?;
    report.divergences.push(divergence_row(&first));
    report.divergences.push(divergence_row(&second));
    let a = first.coordinate(0);
    let b = second.coordinate(0);
    if a.is_empty() || b.is_empty() {
        return Err(crate::Error::Estimation("every trajectory diverged".into()));
    }
    let lo = a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
    let mut hi = a.iter().chain(&b).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    for (scheme, samples) in [(first.scheme, &a), (second.scheme, &b)] {
        for (bin_center, density) in histogram(samples, DENSITY_BINS, lo, hi)? {
            report.hist.push(HistRow { scheme: scheme.to_string(), bin_center, density });
        }
    }
    report.ks.push(KsRow {
        scheme_a: first.scheme.to_string(),
        scheme_b: second.scheme.to_string(),
        statistic: ks_statistic(&a, &b)?,
    });
    report.runtime = started.elapsed();
    Ok(report)
}

/// Output of [`run_sample`]: the report plus the ensemble for dumping.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub report: ExperimentReport,
    pub ensemble: Ensemble,
}

/// One ensemble of `spec.scheme` at the first `h` and `d`, with the
/// expectation of every standard test function.
pub fn run_sample(spec: &ExperimentSpec) -> Result<SampleOutput> {
    expect_kind(spec, ExperimentKind::Sample)?;
    let started = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Sample);
    base_meta(&mut report, spec);
    report.set("scheme", spec.scheme);
    let d = spec.dims[0];
    let h = spec.h_grid[0];
    let mut cfg = SamplerConfig::new(spec.scheme, spec.model.build(d)?, h, spec.steps_for(h)?, spec.n_traj, spec.seed);
    cfg.theta = spec.theta;
    let ensemble = run_ensemble(&cfg)?;
    report.divergences.push(divergence_row(&ensemble));
    let (alpha, beta) = spec.model.alpha_beta();
    for phi in standard_functions() {
        let e = estimate_expectation(&ensemble, &phi)?;
        report.rows.push(ReportRow {
            scheme: spec.scheme.to_string(),
            model: spec.model.name().to_string(),
            alpha,
            beta,
            d,
            h,
            phi: phi.id().to_string(),
            estimate: e.mean,
            reference: None,
            abs_error: None,
            std_error: e.std_error,
        });
    }
    report.runtime = started.elapsed();
    Ok(SampleOutput { report, ensemble })
}
