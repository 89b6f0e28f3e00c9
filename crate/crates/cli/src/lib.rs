//! Argument parsing and dispatch for the `plmc` binary.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 a verify check
//! failed, 3 an experiment cell exceeded its divergence budget.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use plmc_core::harness::{
    plan_mixing, run_convergence, run_density, run_dimdep, run_sample, run_verify, write_dump, ExperimentReport,
    ExperimentSpec, MixingInput, ModelSpec, OutputFormat, VerifyOverrides,
};
use plmc_core::{Error, Scheme};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "plmc", version, about = "Projected Langevin Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one ensemble and report test-function expectations.
    Sample(SampleArgs),
    /// Weak-error convergence orders against a fine reference.
    Converge(CommonArgs),
    /// Histogram and KS comparison of PLMC against a second scheme.
    Density(DensityArgs),
    /// Error growth with dimension at fixed step size.
    Dimdep(CommonArgs),
    /// Assumption and property checks.
    Verify(VerifyArgs),
    /// Step size and iteration count for a target accuracy.
    Mixing(MixingArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Drift model: doublewell or ou.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Dimensions, comma separated.
    #[arg(long = "d", value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Step sizes, comma separated; accepts `2^-k` literals.
    #[arg(long = "h", value_delimiter = ',', value_parser = parse_step)]
    h: Option<Vec<f64>>,
    /// Reference step size.
    #[arg(long = "href", value_parser = parse_step)]
    h_ref: Option<f64>,
    /// Terminal time.
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Number of trajectories.
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Preset trajectory counts and reference step (default).
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// Full trajectory count and reference step.
    #[arg(long)]
    paper_scale: bool,
    /// Drive the reference with its own noise instead of the coarse paths.
    #[arg(long)]
    independent_ref: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// LMC, PLMC, MTLMC or REFERENCE.
    #[arg(long, default_value = "PLMC")]
    scheme: String,
    /// Write terminal states as CSV to this path.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scheme compared against PLMC.
    #[arg(long, default_value = "MTLMC")]
    scheme: String,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    atilde1: Option<f64>,
    #[arg(long)]
    atilde2: Option<f64>,
    /// Radius of the non-contractive region.
    #[arg(long = "radius-r")]
    radius: Option<f64>,
}

#[derive(Debug, Args)]
struct MixingArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long = "Cstar", default_value_t = 1.0)]
    c_star_upper: f64,
    #[arg(long = "cstar", default_value_t = 1.0)]
    c_star_rate: f64,
    /// Sup norm of the test function.
    #[arg(long = "phi-sup", default_value_t = 1.0)]
    phi_sup: f64,
    /// Mean norm of the initial state.
    #[arg(long = "x0-norm", default_value_t = 0.0)]
    x0_norm: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
}

/// Parses `2^-k`, `2^k` or a decimal.
pub fn parse_step(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|e| format!("bad base in {s}: {e}"))?;
            let exp: i32 = exp.trim().parse().map_err(|e| format!("bad exponent in {s}: {e}"))?;
            base.powi(exp)
        }
        None => s.parse().map_err(|e| format!("bad number {s}: {e}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s} is not finite"))
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_INVALID, message: e.to_string() }
    }
}

fn fail(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INVALID, message: message.into() }
}

fn build_spec(base: ExperimentSpec, a: &CommonArgs) -> Result<ExperimentSpec, Failure> {
    let mut spec = base;
    if let Some(m) = &a.model {
        spec.model = match (m.as_str(), spec.model) {
            ("doublewell", ModelSpec::Ou) => ModelSpec::DoubleWell { alpha: 1.0, beta: 1.0 },
            ("doublewell", dw) => dw,
            ("ou", _) => ModelSpec::Ou,
            (other, _) => return Err(fail(format!("unknown model {other}; expected doublewell or ou"))),
        };
    }
    if a.alpha.is_some() || a.beta.is_some() {
        match &mut spec.model {
            ModelSpec::DoubleWell { alpha, beta } => {
                *alpha = a.alpha.unwrap_or(*alpha);
                *beta = a.beta.unwrap_or(*beta);
            }
            ModelSpec::Ou => return Err(fail("--alpha/--beta apply to the double-well model only")),
        }
    }
    if a.paper_scale {
        spec = spec.full_scale();
    }
    if let Some(d) = &a.dims {
        spec.dims = d.clone();
    }
    if let Some(h) = &a.h {
        spec.h_grid = h.clone();
    }
    if let Some(h_ref) = a.h_ref {
        spec.h_ref = h_ref;
    }
    if let Some(t) = a.t_final {
        spec.t_final = t;
    }
    if let Some(m) = a.traj {
        spec.n_traj = m;
    }
    spec.theta = a.theta;
    spec.seed = a.seed;
    spec.coupled = !a.independent_ref;
    spec.format = a.format.parse()?;
    Ok(spec)
}

fn parse_scheme(s: &str) -> Result<Scheme, Failure> {
    s.to_ascii_uppercase().parse::<Scheme>().map_err(Failure::from)
}

fn emit(report: &ExperimentReport, a: &CommonArgs, format: OutputFormat) -> Result<(), Failure> {
    match &a.out {
        Some(path) => {
            report.write(path, format)?;
            println!("{} -> {}", summary(report), path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.render(format).as_bytes())
                .map_err(|e| fail(format!("writing report: {e}")))?;
        }
    }
    log::info!("{} finished in {:.2?}", report.meta.get("kind").map(String::as_str).unwrap_or("run"), report.runtime);
    Ok(())
}

fn summary(report: &ExperimentReport) -> String {
    let kind = report.meta.get("kind").cloned().unwrap_or_default();
    let mut parts = vec![kind];
    if !report.rows.is_empty() {
        parts.push(format!("rows={}", report.rows.len()));
    }
    for o in &report.orders {
        parts.push(format!("{}={:.3}", o.label, o.fit.slope));
    }
    for k in &report.ks {
        parts.push(format!("KS={:.4}", k.statistic));
    }
    if !report.checks.is_empty() {
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        parts.push(format!("checks={} failed={failed}", report.checks.len()));
    }
    let diverged = report.divergences.iter().filter(|d| d.failed).count();
    if diverged > 0 {
        parts.push(format!("divergence_failed_cells={diverged}"));
    }
    parts.join(" ")
}

fn outcome(report: &ExperimentReport) -> i32 {
    if !report.checks_passed() {
        EXIT_CHECK_FAILED
    } else if report.divergence_failed() {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(fail("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| fail(format!("thread pool: {e}"))),
    }
}

fn experiment(
    base: ExperimentSpec,
    a: &CommonArgs,
    adjust: impl FnOnce(&mut ExperimentSpec) -> Result<(), Failure>,
    run: impl FnOnce(&ExperimentSpec) -> plmc_core::Result<ExperimentReport> + Send,
) -> Result<i32, Failure> {
    let mut spec = build_spec(base, a)?;
    adjust(&mut spec)?;
    let report = with_threads(a.threads, || run(&spec))??;
    emit(&report, a, spec.format)?;
    Ok(outcome(&report))
}

fn mixing(a: &MixingArgs) -> Result<i32, Failure> {
    let input = MixingInput {
        c: a.c,
        c_star_upper: a.c_star_upper,
        c_star_rate: a.c_star_rate,
        phi_sup: a.phi_sup,
        mean_x0_norm: a.x0_norm,
        ..MixingInput::new(a.eps, a.gamma, a.d)
    };
    let plan = plan_mixing(input)?;
    let line = format!("h={} k={} ({})", plan.h, plan.k, plan.note);
    println!("{line}");
    if let Some(path) = &a.out {
        let body = match a.format.as_str() {
            "text" => format!("{line}\n"),
            "json" => format!(
                "{{\"epsilon\":{},\"gamma\":{},\"d\":{},\"C\":{},\"Cstar\":{},\"cstar\":{},\"phi_sup\":{},\"x0_norm\":{},\"h\":{},\"k\":{},\"note\":\"{}\"}}\n",
                a.eps, a.gamma, a.d, a.c, a.c_star_upper, a.c_star_rate, a.phi_sup, a.x0_norm, plan.h, plan.k, plan.note
            ),
            other => return Err(fail(format!("unknown format {other}; expected text or json"))),
        };
        std::fs::write(path, body).map_err(|e| fail(format!("writing {}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Converge(a) => experiment(ExperimentSpec::convergence(), &a, |_| Ok(()), run_convergence),
        Command::Dimdep(a) => experiment(ExperimentSpec::dimension_dependence(), &a, |_| Ok(()), run_dimdep),
        Command::Density(a) => {
            let scheme = parse_scheme(&a.scheme)?;
            experiment(
                ExperimentSpec::density(),
                &a.common,
                |s| {
                    s.compare_scheme = scheme;
                    Ok(())
                },
                run_density,
            )
        }
        Command::Verify(a) => {
            let overrides = VerifyOverrides {
                a1: a.a1,
                a2: a.a2,
                atilde1: a.atilde1,
                atilde2: a.atilde2,
                radius: a.radius,
            };
            experiment(ExperimentSpec::verify(), &a.common, |_| Ok(()), move |s| run_verify(s, &overrides))
        }
        Command::Sample(a) => {
            let scheme = parse_scheme(&a.scheme)?;
            let mut spec = build_spec(ExperimentSpec::sample(), &a.common)?;
            spec.scheme = scheme;
            let out = with_threads(a.common.threads, || run_sample(&spec))??;
            if let Some(path) = &a.dump {
                write_dump(path, &out.ensemble, spec.model.name())?;
            }
            emit(&out.report, &a.common, spec.format)?;
            Ok(outcome(&out.report))
        }
        Command::Mixing(a) => mixing(&a),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use plmc_core::harness::{FULL_H_REF, FULL_TRAJECTORIES};

    #[test]
    fn step_literals() {
        assert_eq!(parse_step("2^-5").unwrap(), 0.03125);
        assert_eq!(parse_step("0.125").unwrap(), 0.125);
        assert_eq!(parse_step(" 2^3 ").unwrap(), 8.0);
        assert!(parse_step("2^x").is_err());
        assert!(parse_step("abc").is_err());
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["plmc", "converge", "--bogus"]), EXIT_INVALID);
        assert_eq!(run(["plmc"]), EXIT_INVALID);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["plmc", "--help"]), EXIT_OK);
    }

    #[test]
    fn spec_flags_apply() {
        let cli = Cli::try_parse_from([
            "plmc", "converge", "--model", "ou", "--d", "1,10", "--h", "2^-3,2^-4", "--href", "2^-6", "--T", "1",
            "--traj", "7", "--independent-ref",
        ])
        .unwrap();
        let Command::Converge(a) = cli.command else { panic!() };
        let s = build_spec(ExperimentSpec::convergence(), &a).unwrap();
        assert_eq!(s.model, ModelSpec::Ou);
        assert_eq!(s.dims, vec![1, 10]);
        assert_eq!(s.h_grid, vec![0.125, 0.0625]);
        assert_eq!(s.h_ref, 1.0 / 64.0);
        assert_eq!(s.n_traj, 7);
        assert!(!s.coupled);
    }

    #[test]
    fn full_scale_flag_restores_presets() {
        let cli = Cli::try_parse_from(["plmc", "converge", "--paper-scale"]).unwrap();
        let Command::Converge(a) = cli.command else { panic!() };
        let s = build_spec(ExperimentSpec::convergence(), &a).unwrap();
        assert_eq!(s.n_traj, FULL_TRAJECTORIES);
        assert_eq!(s.h_ref, FULL_H_REF);
        let cli = Cli::try_parse_from(["plmc", "converge", "--desk-scale", "--paper-scale"]);
        assert!(cli.is_err());
    }

    #[test]
    fn alpha_on_ou_is_rejected() {
        let cli = Cli::try_parse_from(["plmc", "sample", "--model", "ou", "--alpha", "2"]).unwrap();
        let Command::Sample(a) = cli.command else { panic!() };
        assert!(build_spec(ExperimentSpec::sample(), &a.common).is_err());
    }
}
