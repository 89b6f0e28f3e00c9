use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Stationary per-coordinate variance of LMC on the OU drift `f(x) = -x`:
/// the fixed point of `v = (1-h)²v + 2h`, i.e. `1/(1 - h/2)`.
pub fn lmc_ou_stationary_variance(h: f64) -> f64 {
    1.0 / (1.0 - 0.5 * h)
}

/// Closed-form moment bound for the Langevin SDE under dissipativity:
/// `e^{-cpt} m0 + (4p-2+2a2)^p / p · ((p-1)/((2a1-c)p))^{p-1} · d^p`,
/// with `0^0 = 1` at `p = 1`.
pub fn sde_moment_bound(p: u32, c: f64, a1: f64, a2: f64, d: usize, t: f64, m0: f64) -> Result<f64> {
    if p == 0 {
        return Err(invalid("p must be at least 1"));
    }
    if !(c > 0.0 && c < 2.0 * a1) {
        return Err(invalid(format!("c must lie in (0, 2·a1) = (0, {}), got {c}", 2.0 * a1)));
    }
    if !(m0 >= 0.0) || !(t >= 0.0) {
        return Err(invalid("m0 and t must be nonnegative"));
    }
    let pf = p as f64;
    let ratio = if p == 1 { 1.0 } else { ((pf - 1.0) / ((2.0 * a1 - c) * pf)).powi(p as i32 - 1) };
    let constant = (4.0 * pf - 2.0 + 2.0 * a2).powi(p as i32) / pf * ratio;
    Ok((-c * pf * t).exp() * m0 + constant * (d as f64).powi(p as i32))
}

/// Total variation (in the `sup_{‖φ‖₀≤1}` normalization, twice the usual
/// one) between `N(0, σ_a²)` and `N(0, σ_b²)` on the real line.
pub fn gaussian_tv_oracle(sigma_a: f64, sigma_b: f64) -> Result<f64> {
    isotropic_gaussian_tv_oracle(sigma_a, sigma_b, 1)
}

/// Same normalization, between `N(0, σ_a² I_d)` and `N(0, σ_b² I_d)`.
///
/// Both laws are radial, so the distance equals the L¹ distance of the
/// densities of `‖X‖`. The integral is evaluated by adaptive Simpson
/// quadrature, split at the crossing radius of the two densities, to an
/// absolute tolerance of 1e-10.
pub fn isotropic_gaussian_tv_oracle(sigma_a: f64, sigma_b: f64, d: usize) -> Result<f64> {
    if !(sigma_a > 0.0 && sigma_b > 0.0 && sigma_a.is_finite() && sigma_b.is_finite()) {
        return Err(invalid("standard deviations must be positive"));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if sigma_a == sigma_b {
        return Ok(0.0);
    }
    let (lo, hi) = if sigma_a < sigma_b { (sigma_a, sigma_b) } else { (sigma_b, sigma_a) };
    let df = d as f64;
    let log_norm = |s: f64| -0.5 * df * (2.0 * s * s).ln() - ln_gamma(0.5 * df) + std::f64::consts::LN_2;
    let (na, nb) = (log_norm(lo), log_norm(hi));
    let density = |r: f64, s: f64, ln_c: f64| -> f64 {
        if r == 0.0 {
            return if d == 1 { ln_c.exp() } else { 0.0 };
        }
        (ln_c + (df - 1.0) * r.ln() - r * r / (2.0 * s * s)).exp()
    };
    let integrand = |r: f64| (density(r, lo, na) - density(r, hi, nb)).abs();
    let crossing = (2.0 * df * (hi / lo).ln() * lo * lo * hi * hi / (hi * hi - lo * lo)).sqrt();
    let upper = hi * (df.sqrt() + 40.0);
    let tol = 2.5e-11;
    let total = adaptive_simpson(&integrand, 0.0, crossing, tol) + adaptive_simpson(&integrand, crossing, upper, tol);
    Ok(total)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    // Seed with a uniform partition so narrow features are not skipped by the
    // first coarse estimate.
    const PIECES: usize = 64;
    let w = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(f, x0, x1, f0, fm, f1, whole, tol / PIECES as f64, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_lr;

    /// Two radial laws cross once, so the L¹ distance is twice the CDF gap
    /// at the crossing radius.
    fn closed_form(sa: f64, sb: f64, d: usize) -> f64 {
        let (lo, hi) = if sa < sb { (sa, sb) } else { (sb, sa) };
        let df = d as f64;
        let r2 = 2.0 * df * (hi / lo).ln() * lo * lo * hi * hi / (hi * hi - lo * lo);
        let cdf = |s: f64| gamma_lr(0.5 * df, r2 / (2.0 * s * s));
        2.0 * (cdf(lo) - cdf(hi))
    }

    #[test]
    fn oracle_matches_closed_form() {
        for d in [1, 2, 10] {
            for (a, b) in [(1.0, 1.1), (1.0, 2.0), (0.3, 0.31), (1.0, (4.0f64 / 3.0).sqrt())] {
                let q = isotropic_gaussian_tv_oracle(a, b, d).unwrap();
                let c = closed_form(a, b, d);
                assert!((q - c).abs() < 1e-9, "d={d} a={a} b={b}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn oracle_trivial_cases() {
        assert_eq!(gaussian_tv_oracle(1.3, 1.3).unwrap(), 0.0);
        assert_eq!(gaussian_tv_oracle(1.0, 2.0).unwrap(), gaussian_tv_oracle(2.0, 1.0).unwrap());
        assert!(gaussian_tv_oracle(0.0, 1.0).is_err());
        let far = gaussian_tv_oracle(1.0, 1e4).unwrap();
        assert!(far > 1.99 && far <= 2.0 + 1e-9);
    }

    #[test]
    fn oracle_monotone_in_log_ratio() {
        let vals: Vec<f64> = [1.1, 1.2, 1.5, 2.0].iter().map(|r| gaussian_tv_oracle(1.0, *r).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]), "{vals:?}");
    }

    #[test]
    fn lmc_ou_variance_is_one_step_fixed_point() {
        for h in [0.5, 0.125, 0.01] {
            let v = lmc_ou_stationary_variance(h);
            assert!(((1.0 - h) * (1.0 - h) * v + 2.0 * h - v).abs() < 1e-14);
        }
    }

    #[test]
    fn moment_bound_p1() {
        let (d, t, x0sq) = (3, 0.7, 2.5);
        let b = sde_moment_bound(1, 1.0, 1.0, 1.0, d, t, x0sq).unwrap();
        assert!((b - ((-t).exp() * x0sq + 4.0 * d as f64)).abs() < 1e-14);
        let limit = sde_moment_bound(1, 1.0, 1.0, 1.0, d, 1e6, x0sq).unwrap();
        assert_eq!(limit, 12.0);
        assert_eq!(sde_moment_bound(1, 1.0, 1.0, 1.0, d, 0.0, 0.0).unwrap(), 12.0);
    }

    #[test]
    fn moment_bound_p2() {
        // (8-2+2)^2/2 · (1/(2·(2-1)))^1 · d² = 64/2 · 1/2 · d² = 16 d².
        let b = sde_moment_bound(2, 1.0, 1.0, 1.0, 3, 50.0, 0.0).unwrap();
        assert!((b - 16.0 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn moment_bound_rejects_bad_c() {
        assert!(sde_moment_bound(1, 0.0, 1.0, 1.0, 1, 1.0, 0.0).is_err());
        assert!(sde_moment_bound(1, 2.0, 1.0, 1.0, 1, 1.0, 0.0).is_err());
    }
}
