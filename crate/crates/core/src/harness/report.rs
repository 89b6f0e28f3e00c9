use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use super::{ExperimentKind, OutputFormat};
use crate::error::{Error, Result};
use crate::metrics::{fit_order, ErrorRecord, OrderFit};
use crate::model::AssumptionReport;
use crate::samplers::Ensemble;

pub const ROW_HEADER: &str = "scheme,model,alpha,beta,d,h,phi,estimate,reference,abs_error,std_error";

/// One `(scheme, d, h, φ)` estimate. `reference` and `abs_error` are empty for
/// plain sampling runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scheme: String,
    pub model: String,
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    pub h: f64,
    pub phi: String,
    pub estimate: f64,
    pub reference: Option<f64>,
    pub abs_error: Option<f64>,
    pub std_error: f64,
}

impl ReportRow {
    pub(crate) fn from_record(scheme: &str, model: &str, alpha: f64, beta: f64, r: &ErrorRecord) -> Self {
        Self {
            scheme: scheme.to_string(),
            model: model.to_string(),
            alpha,
            beta,
            d: r.d,
            h: r.h,
            phi: r.phi.as_str().to_string(),
            estimate: r.estimate,
            reference: Some(r.reference),
            abs_error: Some(r.abs_error),
            std_error: r.std_error,
        }
    }
}

/// Fitted order for one test function. `label` is the φ name, suffixed with
/// `@d=<d>` when a convergence report covers several dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRow {
    pub label: String,
    pub fit: OrderFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvRow {
    pub d: usize,
    pub h: f64,
    pub tv_paper_convention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistRow {
    pub scheme: String,
    pub bin_center: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsRow {
    pub scheme_a: String,
    pub scheme_b: String,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub scheme: String,
    pub d: usize,
    pub h: f64,
    pub diverged: usize,
    pub total: usize,
    pub failed: bool,
}

/// Report of one experiment. Everything except `runtime` is serialized, so
/// reruns with the same inputs produce identical files.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExperimentReport {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
    pub orders: Vec<OrderRow>,
    pub tv: Vec<TvRow>,
    pub hist: Vec<HistRow>,
    pub ks: Vec<KsRow>,
    pub checks: Vec<AssumptionReport>,
    pub divergences: Vec<DivergenceRow>,
    #[serde(skip)]
    pub runtime: Duration,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub(crate) fn new(kind: ExperimentKind) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), kind.as_str().to_string());
        meta.insert("version".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self { meta, ..Self::default() }
    }

    pub(crate) fn set(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    /// True when any cell exceeded the divergence budget.
    pub fn divergence_failed(&self) -> bool {
        self.divergences.iter().any(|d| d.failed)
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn order(&self, label: &str) -> Option<&OrderFit> {
        self.orders.iter().find(|o| o.label == label).map(|o| &o.fit)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        if !self.rows.is_empty() {
            let _ = writeln!(out, "{ROW_HEADER}");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.scheme,
                    r.model,
                    r.alpha,
                    r.beta,
                    r.d,
                    r.h,
                    r.phi,
                    r.estimate,
                    opt(r.reference),
                    opt(r.abs_error),
                    r.std_error
                );
            }
        }
        for o in &self.orders {
            let _ = writeln!(out, "ORDER,{},{},{}", o.label, o.fit.slope, o.fit.residual_rms);
        }
        if !self.tv.is_empty() {
            let _ = writeln!(out, "# TV,d,h,tv_paper_convention");
            for t in &self.tv {
                let _ = writeln!(out, "TV,{},{},{}", t.d, t.h, t.tv_paper_convention);
            }
        }
        for hr in &self.hist {
            let _ = writeln!(out, "HIST,{},{},{}", hr.scheme, hr.bin_center, hr.density);
        }
        for k in &self.ks {
            let _ = writeln!(out, "KS,{},{},{}", k.scheme_a, k.scheme_b, k.statistic);
        }
        for c in &self.checks {
            let _ = writeln!(out, "CHECK,{},{},{},{},{}", c.id, c.samples, c.violations, c.worst_margin, c.pass);
        }
        if !self.divergences.is_empty() {
            let _ = writeln!(out, "# DIVERGENCE,scheme,d,h,diverged,total,status");
            for d in &self.divergences {
                let status = if d.failed { "FAILED" } else { "OK" };
                let _ = writeln!(out, "DIVERGENCE,{},{},{},{},{},{}", d.scheme, d.d, d.h, d.diverged, d.total, status);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        std::fs::write(path, self.render(format))?;
        Ok(())
    }
}

/// Recomputes the order fits from the error rows of a CSV report, grouping
/// exactly as the writer does. Returns `(label, fit)` in first-seen order.
pub fn orders_from_csv(text: &str) -> Result<Vec<(String, OrderFit)>> {
    let mut kind = String::new();
    type Group = (String, usize, Vec<(f64, f64)>);
    let mut groups: Vec<Group> = Vec::new();
    let mut rows: Vec<(usize, f64, String, f64)> = Vec::new();
    let mut in_rows = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# kind=") {
            kind = rest.to_string();
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if line == ROW_HEADER {
            in_rows = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if !in_rows || fields.len() != 11 {
            in_rows = false;
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        let d: usize = fields[4].parse().map_err(|e| Error::Parse(format!("{}: {e}", fields[4])))?;
        let h = parse(fields[5])?;
        if fields[9].is_empty() {
            continue;
        }
        rows.push((d, h, fields[6].to_string(), parse(fields[9])?));
    }
    let dims: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (d, h, phi, err) in rows {
        let (label, x) = if kind == "dimdep" {
            (phi, d as f64)
        } else if dims.len() > 1 {
            (format!("{phi}@d={d}"), h)
        } else {
            (phi, h)
        };
        match groups.iter_mut().find(|g| g.0 == label) {
            Some(g) => g.2.push((x, err)),
            None => groups.push((label, d, vec![(x, err)])),
        }
    }
    groups
        .into_iter()
        .filter(|g| g.2.len() >= 2)
        .map(|(label, _, pts)| fit_order(&pts).map(|f| (label, f)))
        .collect()
}

/// Writes terminal states as CSV: a column-name comment, a values comment and
/// one row per trajectory with 17 significant digits.
pub fn write_dump(path: &Path, ensemble: &Ensemble, model: &str) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# scheme,model,d,h,N,M,seed")?;
    writeln!(
        file,
        "# {},{},{},{},{},{},{}",
        ensemble.scheme,
        model,
        ensemble.dimension,
        ensemble.h,
        ensemble.n_steps,
        ensemble.len(),
        ensemble.master_seed
    )?;
    let mut line = String::new();
    for row in ensemble.rows() {
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v:.16e}");
        }
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(())
}
