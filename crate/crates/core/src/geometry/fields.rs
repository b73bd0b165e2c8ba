use serde::{Deserialize, Serialize};

use crate::scalar::{seed, Scalar};

/// Closed-form scalar field profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldProfile {
    /// `c0 + c·x`.
    Affine { c0: f64, c: [f64; 4] },
    /// `amp sin(k·x + phase)`.
    Wave { amp: f64, k: [f64; 4], phase: f64 },
}

impl FieldProfile {
    pub fn eval<S: Scalar>(&self, x: [S; 4]) -> S {
        match self {
            FieldProfile::Affine { c0, c } => {
                let mut s = S::from_f64(*c0);
                for (xi, ci) in x.iter().zip(c.iter()) {
                    s += xi.scale(*ci);
                }
                s
            }
            FieldProfile::Wave { amp, k, phase } => {
                let mut s = S::from_f64(*phase);
                for (xi, ki) in x.iter().zip(k.iter()) {
                    s += xi.scale(*ki);
                }
                s.sin().scale(*amp)
            }
        }
    }
}

/// `L` scalar fields sharing one mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldFrame {
    pub fields: Vec<FieldProfile>,
    pub mass: f64,
}

impl ScalarFieldFrame {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn phi(&self, x: [f64; 4]) -> Vec<f64> {
        self.fields.iter().map(|f| f.eval(x)).collect()
    }

    /// `d_phi[ℓ][j] = ∂_j φ_ℓ`.
    pub fn d_phi(&self, x: [f64; 4]) -> Vec<[f64; 4]> {
        self.fields
            .iter()
            .map(|f| f.eval(seed(x)).d)
            .collect::<Vec<_>>()
    }

    /// Coordinate fields `φ_ℓ = x^ℓ` for ℓ ≤ 4 plus a constant fifth field,
    /// padded with small waves up to `l` fields.
    pub fn canonical(l: usize, mass: f64) -> Self {
        let mut fields = Vec::with_capacity(l);
        for i in 0..l.min(4) {
            let mut c = [0.0; 4];
            c[i] = 1.0;
            fields.push(FieldProfile::Affine { c0: 0.0, c });
        }
        if l > 4 {
            fields.push(FieldProfile::Affine {
                c0: 1.0,
                c: [0.0; 4],
            });
        }
        for i in 5..l {
            fields.push(FieldProfile::Wave {
                amp: 0.1,
                k: [0.3 * i as f64, 0.1, -0.2, 0.05 * i as f64],
                phase: 0.4,
            });
        }
        ScalarFieldFrame { fields, mass }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_phi_matches_finite_differences() {
        let f = ScalarFieldFrame::canonical(7, 1.0);
        let x = [0.1, 0.2, -0.3, 0.4];
        let d = f.d_phi(x);
        let h = 1e-6;
        for j in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (p, m) = (f.phi(xp), f.phi(xm));
            for l in 0..7 {
                assert!((d[l][j] - (p[l] - m[l]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }
}
