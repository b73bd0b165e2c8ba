use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CatalogEntry, InteractionError, NullCovectorSet};

/// Brute-force evaluation of the four-slot interaction integral
/// `Π_j ∫₀^∞ y^{n_j} e^{iτ p_j y} h(y) dy` with the cutoff
/// `h(y) = exp(-y²/width²)`. The parametrix prefactors are left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub width: f64,
    /// Contour rotation angle in radians.
    pub angle: f64,
    pub rel_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            width: 50.0,
            angle: std::f64::consts::FRAC_PI_6,
            rel_tol: 1e-10,
        }
    }
}

fn factorial(n: i64) -> f64 {
    (2..=n).map(|k| k as f64).product()
}

/// `∫₀^∞ y^n e^{iτpy} exp(-y²/w²) dy`, evaluated along the ray
/// `y = t e^{iφ}` on which both factors decay.
pub fn slot_integral(n: i64, tau: f64, p: f64, opts: &OracleOptions) -> Result<Complex64, InteractionError> {
    let c = (tau * p).abs();
    let s = (tau * p).signum();
    let phi = s * opts.angle;
    let rot = Complex64::from_polar(1.0, phi);
    let rot2 = rot * rot;
    let cw2 = (c * opts.width).powi(2);
    let i = Complex64::new(0.0, 1.0);
    let f = |u: f64| -> Complex64 {
        if u == 0.0 {
            return Complex64::new(if n == 0 { 1.0 } else { 0.0 }, 0.0);
        }
        (n as f64 * u.ln() + (i * s * u * rot - u * u * rot2 / cw2)).exp()
    };
    // u^n e^{-u sin φ} is negligible past this point.
    let sin = opts.angle.sin();
    let end = ((n as f64 + 80.0) / sin).min(2.0 * c * opts.width * (12.0 + (n as f64).sqrt()));
    let scale = factorial(n) / sin.powi(n as i32 + 1);
    let pieces = ((end / 4.0).ceil() as usize).max(1);
    let h = end / pieces as f64;
    let (mut re, mut im, mut err) = (0.0, 0.0, 0.0);
    let abs_tol = opts.rel_tol * scale * 1e-3 / pieces as f64;
    for k in 0..pieces {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        let r = quadrature::integrate(|u| f(u).re, a, b, abs_tol);
        let m = quadrature::integrate(|u| f(u).im, a, b, abs_tol);
        re += r.integral;
        im += m.integral;
        err += r.error_estimate + m.error_estimate;
    }
    let j = Complex64::new(re, im);
    if !(err <= opts.rel_tol * j.norm().max(1e-300)) {
        return Err(InteractionError::Quadrature { error: err });
    }
    Ok(rot.powi(n as i32 + 1) * c.powi(-(n as i32 + 1)) * j)
}

/// Product of the four slot integrals of a catalog entry.
pub fn oscillatory_integral_oracle(
    entry: &CatalogEntry,
    a: u32,
    set: &NullCovectorSet,
    tau: f64,
    opts: &OracleOptions,
) -> Result<Complex64, InteractionError> {
    entry.row.check(entry.k, a)?;
    let n = entry.slot_exponents(a);
    let mut v = Complex64::new(1.0, 0.0);
    for j in 0..4 {
        v *= slot_integral(n[j], tau, set.p(entry.sigma[j]), opts)?;
    }
    Ok(v)
}

/// Leading asymptotics `Π_j Γ(n_j+1) (i/(τ p_j))^{n_j+1}` of the oracle.
pub fn integral_leading(entry: &CatalogEntry, a: u32, set: &NullCovectorSet, tau: f64) -> Complex64 {
    let n = entry.slot_exponents(a);
    let i = Complex64::new(0.0, 1.0);
    let mut v = Complex64::new(1.0, 0.0);
    for j in 0..4 {
        let p = set.p(entry.sigma[j]);
        v *= factorial(n[j]) * (i / (tau * p)).powi(n[j] as i32 + 1);
    }
    v
}

/// Least-squares slope of `ln|f(τ)|` against `ln τ`.
pub fn fitted_slope(taus: &[f64], values: &[Complex64]) -> f64 {
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.norm().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::super::{build_covectors, catalog};
    use super::*;

    const RHO: [f64; 4] = [0.3, 0.25, 0.2, 0.15];

    #[test]
    fn gamma_integral_without_cutoff() {
        // Very wide cutoff: the integral is n!/(-iτp)^{n+1}.
        let opts = OracleOptions {
            width: 1e8,
            ..Default::default()
        };
        for (n, tau, p) in [(0, 3.0, -0.5), (3, 10.0, -0.2), (7, 100.0, 0.05)] {
            let v = slot_integral(n, tau, p, &opts).unwrap();
            let exact = factorial(n) / Complex64::new(0.0, -tau * p).powi(n as i32 + 1);
            assert!((v - exact).norm() < 1e-10 * exact.norm(), "{n} {v} {exact}");
        }
    }

    #[test]
    fn conjugates_under_tau_reflection() {
        let s = build_covectors(RHO).unwrap();
        let e = catalog(6)[100];
        let o = OracleOptions::default();
        let a = oscillatory_integral_oracle(&e, 6, &s, 300.0, &o).unwrap();
        let b = oscillatory_integral_oracle(&e, 6, &s, -300.0, &o).unwrap();
        assert!((a - b.conj()).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn leading_ratio_at_large_tau() {
        let s = build_covectors(RHO).unwrap();
        let e = catalog(6).into_iter().find(|e| e.is_leader()).unwrap();
        let v = oscillatory_integral_oracle(&e, 6, &s, 2000.0, &OracleOptions::default()).unwrap();
        let r = v / integral_leading(&e, 6, &s, 2000.0);
        assert!((r.re - 1.0).abs() < 0.1 && r.im.abs() < 0.1, "{r}");
    }

    #[test]
    fn slope_fit_is_exact_for_power_laws() {
        let taus = [1.0, 2.0, 4.0];
        let vals: Vec<Complex64> = taus.iter().map(|t: &f64| Complex64::new(3.0 * t.powi(-5), 0.0)).collect();
        assert!((fitted_slope(&taus, &vals) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn slope_matches_integral_exponent() {
        let s = build_covectors(RHO).unwrap();
        let taus = [250.0, 500.0, 1000.0, 2000.0];
        let all = catalog(6);
        let picks = [
            all.iter().find(|e| e.is_leader()).unwrap(),
            all.iter().find(|e| e.k == [2, 2, 1, 1] && e.sigma == [0, 1, 2, 3]).unwrap(),
            all.iter().find(|e| e.k == [0, 1, 0, 1] && e.sigma == [3, 2, 1, 0]).unwrap(),
        ];
        for e in picks {
            let vals: Vec<Complex64> = taus
                .iter()
                .map(|t| oscillatory_integral_oracle(e, 6, &s, *t, &OracleOptions::default()).unwrap())
                .collect();
            let expect = -e.slot_exponents(6).iter().map(|n| n + 1).sum::<i64>() as f64;
            assert!((fitted_slope(&taus, &vals) - expect).abs() < 0.05, "{e}");
        }
    }
}
