use serde::Serialize;

use crate::error::{invalid, Result};

/// Least-squares line through `(ln h, ln error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`; returns
/// `(slope, intercept, residual_rms)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("least squares needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

/// Convergence order from `(h, error)` pairs: the slope of `ln error` against
/// `ln h`. Zero errors are dropped with a warning; negative or non-finite
/// entries are rejected.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if let Some(p) = points.iter().find(|(h, e)| !(*h > 0.0 && h.is_finite()) || !(*e >= 0.0 && e.is_finite())) {
        return Err(invalid(format!("order fit needs positive entries, got {p:?}")));
    }
    let kept: Vec<(f64, f64)> = points.iter().copied().filter(|(_, e)| *e > 0.0).collect();
    if kept.len() < points.len() {
        log::warn!("order fit: dropped {} zero error(s)", points.len() - kept.len());
    }
    let xs: Vec<f64> = kept.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|(_, e)| e.ln()).collect();
    let (slope, intercept, residual_rms) = least_squares_slope(&xs, &ys)?;
    Ok(OrderFit { slope, intercept, residual_rms, points: kept.len() })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_statistic(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(invalid("KS statistic needs two non-empty samples"));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Equal-width histogram on `[lo, hi]` (the last bin is closed). Densities are
/// `count / (n · width)`, so they integrate to the in-range mass fraction.
/// Returns `(bin_center, density)` pairs.
pub fn histogram(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    if bins == 0 || !(lo < hi) {
        return Err(invalid(format!("histogram needs bins >= 1 and lo < hi, got bins={bins}, [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x <= hi {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n * width)))
        .collect())
}
