//! Four-wave interaction calculus on Minkowski space.

mod catalog;
mod oracle;

pub use catalog::{
    catalog, chosen_polarizations, closed_form, compare_exponents, dual_basis, exponents, harmonicity_basis, pair_contract,
    parse_catalog, dominance_compare, indicator_g, kappa_determinant, polarization_factor_beta1,
    AsymptoticMonomial, CatalogEntry, CatalogRow, Dominance, SecondFactor, Family, Flags, Hierarchy, IndicatorG, Kappa, Scaled,
    CATALOG_FIXTURE,
};
pub use oracle::{fitted_slope, integral_leading, oscillatory_integral_oracle, slot_integral, OracleOptions};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::M4;

pub const MINKOWSKI: M4<f64> = [
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InteractionError {
    #[error("rho_{index} = {rho} outside (0, 1/2) or too large for a real null completion")]
    BadRho { index: usize, rho: f64 },
    #[error("parametrix undefined: pairing {pairing:e} of the factor covectors vanishes")]
    ParametrixUndefined { pairing: f64 },
    #[error("Q0 needs two Heaviside factors, or one with a modulation")]
    ParametrixShape,
    #[error("k = {k:?} violates {inequality}")]
    Inadmissible { k: [u32; 4], inequality: String },
    #[error("malformed catalog fixture at line {line}: {msg}")]
    Fixture { line: usize, msg: String },
    #[error("quadrature did not converge (error estimate {error:e})")]
    Quadrature { error: f64 },
    #[error("the two leading catalog entries are not the expected pair")]
    UnexpectedLeaders,
}

pub fn pairing(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// `b^(1..5)` as indices `0..5`, with cached Minkowski pairings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCovectorSet {
    pub b: [[f64; 4]; 5],
    pub rho: [f64; 4],
    pub omega: [[f64; 5]; 5],
}

impl NullCovectorSet {
    pub fn omega(&self, i: usize, j: usize) -> f64 {
        self.omega[i][j]
    }

    /// `p_j = ω_{j5} = -ρ_j²/2`.
    pub fn p(&self, j: usize) -> f64 {
        -0.5 * self.rho[j] * self.rho[j]
    }

    /// Determinant of the map `y ↦ x` with `y_j = b^(j)·x`.
    ///
    /// Expanded around `b^(5)` so that nearly parallel rows keep their precision.
    pub fn det_a(&self) -> f64 {
        let c: Vec<nalgebra::Vector3<f64>> = (0..4)
            .map(|j| {
                let r = self.rho[j];
                nalgebra::Vector3::new(-0.5 * r * r, self.b[j][2], self.b[j][3])
            })
            .collect();
        let mut det = 0.0;
        for j in 0..4 {
            let rows: Vec<_> = (0..4).filter(|&i| i != j).map(|i| c[i].transpose()).collect();
            let minor = nalgebra::Matrix3::from_rows(&rows).determinant();
            det += if j % 2 == 0 { minor } else { -minor };
        }
        1.0 / det
    }
}

/// `b^(5) = (1,1,0,0)`, `b^(j) = (1, 1-ρ²/2, β, ρ³)` with `β` completing the null condition.
pub fn build_covectors(rho: [f64; 4]) -> Result<NullCovectorSet, InteractionError> {
    let mut b = [[0.0; 4]; 5];
    b[4] = [1.0, 1.0, 0.0, 0.0];
    for (j, &r) in rho.iter().enumerate() {
        let r2 = r * r;
        let rad = r2 - 0.25 * r2 * r2 - r2 * r2 * r2;
        if !(r > 0.0 && r < 0.5) || rad < 0.0 {
            return Err(InteractionError::BadRho { index: j + 1, rho: r });
        }
        b[j] = [1.0, 1.0 - 0.5 * r2, rad.sqrt(), r2 * r];
    }
    // ln of β_j / ρ_j
    let ls: Vec<f64> = rho.iter().map(|r| 0.5 * (-0.25 * r * r - r.powi(4)).ln_1p()).collect();
    let mut omega = [[0.0; 5]; 5];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let (ri, rj) = (rho[i], rho[j]);
                omega[i][j] = -0.5 * (ri - rj).powi(2)
                    + ri * rj * (ls[i] + ls[j]).exp_m1()
                    + 0.25 * ri * ri * rj * rj
                    + (ri * rj).powi(3);
            }
        }
        omega[i][4] = -0.5 * rho[i] * rho[i];
        omega[4][i] = omega[i][4];
    }
    Ok(NullCovectorSet { b, rho, omega })
}

/// `c · Π (b^(j)·x)₊^{a_j} · e^{iτ b^(5)·x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveTerm {
    pub coefficient: Complex64,
    pub factors: Vec<(usize, f64)>,
    pub modulation: Option<f64>,
}

impl PlaneWaveTerm {
    pub fn new(coefficient: Complex64, factors: Vec<(usize, f64)>, modulation: Option<f64>) -> Self {
        PlaneWaveTerm {
            coefficient,
            factors,
            modulation,
        }
    }

    pub fn eval(&self, set: &NullCovectorSet, x: [f64; 4]) -> Complex64 {
        let mut v = self.coefficient;
        for &(j, a) in &self.factors {
            let t = dot(&set.b[j], &x);
            v *= if t > 0.0 { t.powf(a) } else { 0.0 };
        }
        if let Some(tau) = self.modulation {
            v *= Complex64::from_polar(1.0, tau * dot(&set.b[4], &x));
        }
        v
    }

    fn same_shape(&self, o: &PlaneWaveTerm) -> bool {
        self.modulation == o.modulation
            && self.factors.len() == o.factors.len()
            && self.factors.iter().zip(&o.factors).all(|(a, b)| a.0 == b.0 && a.1 == b.1)
    }
}

fn dot(b: &[f64; 4], x: &[f64; 4]) -> f64 {
    b.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// The formal parametrix of the wave operator on a product of two plane waves.
pub fn q0_apply(term: &PlaneWaveTerm, set: &NullCovectorSet) -> Result<PlaneWaveTerm, InteractionError> {
    let tol = 1e-12;
    match (term.factors.as_slice(), term.modulation) {
        (&[(i, a1), (j, a2)], None) => {
            let w = set.omega(i, j);
            if w.abs() <= tol {
                return Err(InteractionError::ParametrixUndefined { pairing: w });
            }
            Ok(PlaneWaveTerm {
                coefficient: term.coefficient / (2.0 * (a1 + 1.0) * (a2 + 1.0) * w),
                factors: vec![(i, a1 + 1.0), (j, a2 + 1.0)],
                modulation: None,
            })
        }
        (&[(i, a)], Some(tau)) => {
            let w = set.omega(i, 4);
            if w.abs() <= tol || tau == 0.0 {
                return Err(InteractionError::ParametrixUndefined { pairing: w * tau });
            }
            Ok(PlaneWaveTerm {
                coefficient: term.coefficient / (Complex64::new(0.0, 2.0 * (a + 1.0) * w * tau)),
                factors: vec![(i, a + 1.0)],
                modulation: Some(tau),
            })
        }
        _ => Err(InteractionError::ParametrixShape),
    }
}

/// Symbolic `ĝ^{jk}∂_j∂_k` of a term, with like terms merged.
pub fn wave_apply(term: &PlaneWaveTerm, set: &NullCovectorSet) -> Vec<PlaneWaveTerm> {
    // Each factor: (covector index, exponent or None for the modulation).
    let mut parts: Vec<(usize, Option<f64>)> = term.factors.iter().map(|&(j, a)| (j, Some(a))).collect();
    if term.modulation.is_some() {
        parts.push((4, None));
    }
    let tau = term.modulation.unwrap_or(0.0);
    let deriv = |p: (usize, Option<f64>), order: u32| -> (Complex64, Option<f64>) {
        match p.1 {
            Some(a) => {
                let c = if order == 1 { a } else { a * (a - 1.0) };
                (Complex64::new(c, 0.0), Some(a - order as f64))
            }
            None => (Complex64::new(0.0, tau).powu(order), None),
        }
    };
    let mut out: Vec<PlaneWaveTerm> = Vec::new();
    let mut push = |t: PlaneWaveTerm| {
        if let Some(e) = out.iter_mut().find(|e| e.same_shape(&t)) {
            e.coefficient += t.coefficient;
        } else {
            out.push(t);
        }
    };
    let n = parts.len();
    for i in 0..n {
        for j in 0..n {
            let w = set.omega(parts[i].0, parts[j].0);
            if w == 0.0 {
                continue;
            }
            let mut c = term.coefficient * w;
            let mut exps: Vec<Option<f64>> = parts.iter().map(|p| p.1).collect();
            if i == j {
                let (d, e) = deriv(parts[i], 2);
                c *= d;
                exps[i] = e;
            } else {
                let (d1, e1) = deriv(parts[i], 1);
                let (d2, e2) = deriv(parts[j], 1);
                c *= d1 * d2;
                exps[i] = e1;
                exps[j] = e2;
            }
            let factors = parts
                .iter()
                .zip(&exps)
                .filter_map(|(p, e)| e.map(|a| (p.0, a)))
                .collect();
            push(PlaneWaveTerm {
                coefficient: c,
                factors,
                modulation: term.modulation,
            });
        }
    }
    let scale = out.iter().map(|t| t.coefficient.norm()).fold(0.0, f64::max);
    out.retain(|t| t.coefficient.norm() > 1e-12 * scale);
    out
}
