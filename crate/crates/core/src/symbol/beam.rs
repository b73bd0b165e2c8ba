use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SymbolError;
use crate::geometry::{metric_inverse, MetricProvider};
use crate::scalar::{seed, Dual4};

type C4 = Matrix4<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOptions {
    pub step: f64,
    /// Smallest admissible `|det X|` before the beam is declared caustic.
    pub det_floor: f64,
}

impl Default for BeamOptions {
    fn default() -> Self {
        BeamOptions {
            step: 5e-3,
            det_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSample {
    pub s: f64,
    pub x: [f64; 4],
    /// `dA` on the ray, the covector `ζ(s)`.
    pub zeta: [f64; 4],
    /// Phase value `A(s)` on the ray.
    pub a: f64,
    /// Complex Hessian, stored as `[re, im]` row-major blocks.
    pub h: [[[f64; 2]; 4]; 4],
}

impl BeamSample {
    pub fn hessian(&self) -> C4 {
        C4::from_fn(|i, j| Complex64::new(self.h[i][j][0], self.h[i][j][1]))
    }

    /// Local quadratic phase `A + ζ·δ + ½ δᵀ H δ` with `δ = x - γ(s)`.
    pub fn phase(&self, x: [f64; 4]) -> Complex64 {
        let d: Vec<f64> = (0..4).map(|k| x[k] - self.x[k]).collect();
        let h = self.hessian();
        let mut p = Complex64::new(self.a, 0.0);
        for i in 0..4 {
            p += self.zeta[i] * d[i];
            for j in 0..4 {
                p += 0.5 * h[(i, j)] * d[i] * d[j];
            }
        }
        p
    }

    /// `dφ` of the local phase at `x`.
    pub fn gradient(&self, x: [f64; 4]) -> [Complex64; 4] {
        let h = self.hessian();
        let mut g = [Complex64::new(0.0, 0.0); 4];
        for i in 0..4 {
            g[i] = Complex64::new(self.zeta[i], 0.0);
            for j in 0..4 {
                g[i] += h[(i, j)] * (x[j] - self.x[j]);
            }
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    pub samples: Vec<BeamSample>,
}

impl GaussianBeam {
    /// Sample nearest to parameter `s`.
    pub fn at(&self, s: f64) -> &BeamSample {
        let i = self.samples.partition_point(|b| b.s < s);
        let i = i.min(self.samples.len() - 1);
        if i > 0 && (self.samples[i - 1].s - s).abs() < (self.samples[i].s - s).abs() {
            &self.samples[i - 1]
        } else {
            &self.samples[i]
        }
    }

    /// `ĝ^{-1}(dφ, dφ)` of the local phase at base parameter `s`.
    pub fn eikonal_residual<M: MetricProvider>(&self, m: &M, s: f64, x: [f64; 4]) -> Result<Complex64, SymbolError> {
        let ginv = metric_inverse(&m.eval(x), x).map_err(crate::causal::CausalError::from)?;
        let g = self.at(s).gradient(x);
        let mut r = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                r += ginv[i][j] * g[i] * g[j];
            }
        }
        Ok(r)
    }
}

/// Hamiltonian `½ g^{ij}(x) p_i p_j`: value derivatives needed for the flow and
/// its linearization.
struct Hamilton {
    dx: [f64; 4],
    dp: [f64; 4],
    hpp: Matrix4<f64>,
    hpx: Matrix4<f64>,
    hxx: Matrix4<f64>,
}

fn hamilton<M: MetricProvider>(m: &M, x: [f64; 4], p: [f64; 4]) -> Result<Hamilton, SymbolError> {
    let xs: [Dual4<Dual4<f64>>; 4] = seed(seed(x));
    let gi = metric_inverse(&m.eval(xs), x).map_err(crate::causal::CausalError::from)?;
    let mut out = Hamilton {
        dx: [0.0; 4],
        dp: [0.0; 4],
        hpp: Matrix4::zeros(),
        hpx: Matrix4::zeros(),
        hxx: Matrix4::zeros(),
    };
    for i in 0..4 {
        for j in 0..4 {
            let e = gi[i][j];
            out.hpp[(i, j)] = e.v.v;
            out.dp[i] += e.v.v * p[j];
            for k in 0..4 {
                let dk = e.d[k].v;
                out.dx[k] += 0.5 * dk * p[i] * p[j];
                out.hpx[(i, k)] += dk * p[j];
                for l in 0..4 {
                    out.hxx[(k, l)] += 0.5 * e.d[k].d[l] * p[i] * p[j];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone)]
struct State {
    x: [f64; 4],
    p: [f64; 4],
    xm: C4,
    xi: C4,
}

fn deriv<M: MetricProvider>(m: &M, st: &State) -> Result<State, SymbolError> {
    let h = hamilton(m, st.x, st.p)?;
    let hpx = h.hpx.map(|c| Complex64::new(c, 0.0));
    let hpp = h.hpp.map(|c| Complex64::new(c, 0.0));
    let hxx = h.hxx.map(|c| Complex64::new(c, 0.0));
    let mut dp = [0.0; 4];
    for k in 0..4 {
        dp[k] = -h.dx[k];
    }
    Ok(State {
        x: h.dp,
        p: dp,
        xm: hpx * st.xm + hpp * st.xi,
        xi: -(hxx * st.xm) - hpx.transpose() * st.xi,
    })
}

fn axpy(a: &State, h: f64, b: &State) -> State {
    let mut x = a.x;
    let mut p = a.p;
    for k in 0..4 {
        x[k] += h * b.x[k];
        p[k] += h * b.p[k];
    }
    State {
        x,
        p,
        xm: a.xm + b.xm * Complex64::new(h, 0.0),
        xi: a.xi + b.xi * Complex64::new(h, 0.0),
    }
}

fn sample(st: &State, s: f64) -> Result<BeamSample, SymbolError> {
    let inv = st.xm.try_inverse().ok_or(SymbolError::Caustic { s })?;
    let hm = st.xi * inv;
    let hs = (hm + hm.transpose()) * Complex64::new(0.5, 0.0);
    let mut h = [[[0.0; 2]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            h[i][j] = [hs[(i, j)].re, hs[(i, j)].im];
        }
    }
    Ok(BeamSample {
        s,
        x: st.x,
        zeta: st.p,
        a: 0.0,
        h,
    })
}

/// Phase data of a leading-order Gaussian beam along the null geodesic with
/// initial point `y` and covector `eta`.
///
/// The initial Hessian is `i P + H_r`, where `P` is the Euclidean projector
/// annihilating `γ̇(0)` and the real part `H_r` enforces `H γ̇ = ζ̇`.
pub fn gaussian_beam_phase<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    eta: [f64; 4],
    s_max: f64,
    opts: &BeamOptions,
) -> Result<GaussianBeam, SymbolError> {
    let h0 = hamilton(m, y, eta)?;
    let v = h0.dp;
    let vv: f64 = v.iter().map(|c| c * c).sum();
    let zdot: Vec<f64> = h0.dx.iter().map(|c| -c).collect();
    let c: Vec<f64> = v.iter().map(|c| c / vv).collect();
    let zv: f64 = zdot.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    let init = C4::from_fn(|i, j| {
        let proj = if i == j { 1.0 } else { 0.0 } - v[i] * v[j] / vv;
        let real = zdot[i] * c[j] + c[i] * zdot[j] - zv * c[i] * c[j];
        Complex64::new(real, proj)
    });
    let mut st = State {
        x: y,
        p: eta,
        xm: C4::identity(),
        xi: init,
    };
    let steps = ((s_max.abs() / opts.step).ceil() as usize).max(1);
    let h = s_max / steps as f64;
    let mut samples = vec![sample(&st, 0.0)?];
    for i in 0..steps {
        let k1 = deriv(m, &st)?;
        let k2 = deriv(m, &axpy(&st, 0.5 * h, &k1))?;
        let k3 = deriv(m, &axpy(&st, 0.5 * h, &k2))?;
        let k4 = deriv(m, &axpy(&st, h, &k3))?;
        let mut next = axpy(&st, h / 6.0, &k1);
        next = axpy(&next, h / 3.0, &k2);
        next = axpy(&next, h / 3.0, &k3);
        next = axpy(&next, h / 6.0, &k4);
        st = next;
        let s = (i + 1) as f64 * h;
        if st.xm.determinant().norm() < opts.det_floor {
            return Err(SymbolError::Caustic { s });
        }
        samples.push(sample(&st, s)?);
    }
    Ok(GaussianBeam { samples })
}

/// `F_τ(x) = τ^{-1} exp(iτ p(x)) h(x)` with the beam phase at its start,
/// made point-concentrated by an extra imaginary term along `γ̇`.
pub struct TestSource<F> {
    pub base: BeamSample,
    pub tau: f64,
    pub amplitude: F,
    /// Imaginary Hessian weight added along the ray direction.
    pub along: f64,
}

impl<F: Fn([f64; 4]) -> f64> TestSource<F> {
    pub fn new(beam: &GaussianBeam, tau: f64, amplitude: F) -> Self {
        TestSource {
            base: beam.samples[0].clone(),
            tau,
            amplitude,
            along: 1.0,
        }
    }

    pub fn phase(&self, x: [f64; 4]) -> Complex64 {
        let mut p = self.base.phase(x);
        let z = self.base.zeta;
        let zz: f64 = z.iter().map(|c| c * c).sum();
        let d: f64 = (0..4).map(|k| (x[k] - self.base.x[k]) * z[k]).sum::<f64>() / zz.sqrt();
        p += Complex64::new(0.0, 0.5 * self.along * d * d);
        p
    }

    pub fn eval(&self, x: [f64; 4]) -> Complex64 {
        let e = (Complex64::new(0.0, self.tau) * self.phase(x)).exp();
        e * (self.amplitude)(x) / self.tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    fn flat_beam() -> GaussianBeam {
        gaussian_beam_phase(
            &Metric::Minkowski,
            [0.0; 4],
            [-1.0, 1.0, 0.0, 0.0],
            3.0,
            &BeamOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn flat_riccati_matches_closed_form() {
        let b = flat_beam();
        for smp in b.samples.iter().step_by(100) {
            let h = smp.hessian();
            let want = 1.0 / (1.0 + smp.s * smp.s);
            assert!((h[(2, 2)].im - want).abs() < 1e-9, "{} {}", smp.s, h[(2, 2)]);
            assert!((h[(3, 3)].im - want).abs() < 1e-9);
            assert!((h[(2, 2)].re - smp.s * want).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_is_real_on_the_ray() {
        let b = flat_beam();
        for smp in &b.samples {
            assert_eq!(smp.phase(smp.x).im, 0.0);
        }
    }

    #[test]
    fn eikonal_residual_is_quadratic() {
        let m = Metric::product(0.1, 0.8);
        let y = [0.0, -0.3, 0.1, 0.0];
        let eta = [-1.0, m.eval(y)[1][1].sqrt(), 0.0, 0.0];
        let b = gaussian_beam_phase(&m, y, eta, 1.0, &BeamOptions::default()).unwrap();
        let base = b.at(0.5).clone();
        let c = |r: f64| {
            let x = [base.x[0] + 0.3 * r, base.x[1] + 0.2 * r, base.x[2] + r, base.x[3] - 0.5 * r];
            b.eikonal_residual(&m, 0.5, x).unwrap().norm() / (r * r)
        };
        let (c1, c2) = (c(1e-2), c(5e-3));
        assert!(c1 > 1e-3 && (c1 / c2 - 1.0).abs() < 0.1, "{c1} {c2}");
    }

    #[test]
    fn test_source_scaling() {
        let b = flat_beam();
        let f1 = TestSource::new(&b, 50.0, |_| 2.0);
        let f2 = TestSource::new(&b, 100.0, |_| 2.0);
        let y = [0.0; 4];
        assert!((f1.eval(y) - Complex64::new(2.0 / 50.0, 0.0)).norm() < 1e-15);
        assert!((f2.eval(y) / f1.eval(y) - 0.5).norm() < 1e-15);
        for d in [0.05, 0.1, 0.2] {
            let x = [0.0, 0.0, d, 0.0];
            let v = f1.eval(x).norm();
            assert!(v <= 2.0 / 50.0);
            assert!((v - 2.0 / 50.0 * (-0.5 * 50.0 * d * d).exp()).abs() < 1e-12);
        }
    }
}
