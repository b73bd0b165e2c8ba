use nalgebra::{Matrix4, Vector4};

use super::geodesic::{flow_to, FlowOptions};
use super::observer::{Curve, Observer};
use super::CausalError;
use crate::geometry::MetricProvider;
use crate::linalg::{quad, sub4, M4};
use crate::scalar::{lift, Dual4, Scalar};

/// A `g`-orthonormal frame; `e[0]` is future timelike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub e: [[f64; 4]; 4],
    pub g: M4<f64>,
}

impl Frame {
    /// Frame components of a vector: `a^b = ε_b g(v, e_b)`.
    pub fn components(&self, v: &[f64; 4]) -> [f64; 4] {
        let mut a = [0.0; 4];
        for (b, ab) in a.iter_mut().enumerate() {
            let sign = if b == 0 { -1.0 } else { 1.0 };
            *ab = sign * quad(&self.g, v, &self.e[b]);
        }
        a
    }

    pub fn vector(&self, a: &[f64; 4]) -> [f64; 4] {
        let mut v = [0.0; 4];
        for b in 0..4 {
            for k in 0..4 {
                v[k] += a[b] * self.e[b][k];
            }
        }
        v
    }
}

pub fn orthonormal_frame<M: MetricProvider>(m: &M, x: [f64; 4]) -> Result<Frame, CausalError> {
    let g = m.eval(x);
    if g[0][0] >= 0.0 {
        return Err(CausalError::NotTimelike { x });
    }
    let mut e = [[0.0; 4]; 4];
    for (a, ea) in e.iter_mut().enumerate() {
        ea[a] = 1.0;
    }
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        let mut u = e[a];
        for b in 0..a {
            let gb = quad(&g, &out[b], &out[b]);
            let c = quad(&g, &u, &out[b]) / gb;
            for k in 0..4 {
                u[k] -= c * out[b][k];
            }
        }
        let n = quad(&g, &u, &u);
        if (a == 0 && n >= 0.0) || (a > 0 && n <= 0.0) {
            return Err(CausalError::Geometry(
                crate::geometry::GeometryError::Signature { x, negative: 0 },
            ));
        }
        let c = 1.0 / n.abs().sqrt();
        for k in 0..4 {
            out[a][k] = u[k] * c;
        }
    }
    Ok(Frame { e: out, g })
}

/// The future null vector `|n| e_0 + n^a e_a`.
pub fn null_vector<S: Scalar>(frame: &Frame, n: [S; 3]) -> [S; 4] {
    let r = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let mut v = [S::zero(); 4];
    for k in 0..4 {
        v[k] = r.scale(frame.e[0][k]);
        for a in 0..3 {
            v[k] += n[a].scale(frame.e[a + 1][k]);
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDir {
    Future,
    Past,
}

impl TimeDir {
    fn sign(self) -> f64 {
        match self {
            TimeDir::Future => 1.0,
            TimeDir::Past => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub flow: FlowOptions,
    pub tol: f64,
    pub max_iter: usize,
    /// Curve parameter window searched for the initial guess.
    pub s_range: (f64, f64),
    /// Extra starting directions tried around the flat guess.
    pub extra_starts: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            flow: FlowOptions::default(),
            tol: 1e-11,
            max_iter: 40,
            s_range: (-2.9, 2.9),
            extra_starts: 0,
        }
    }
}

/// A null geodesic from a point to a curve: `exp_q(σ ξ) = c(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub s: f64,
    /// Initial velocity at `q`, future pointing, with `exp_q(±xi)` on the curve.
    pub xi: [f64; 4],
    pub residual: f64,
    pub iterations: usize,
}

fn flat_guess<C: Curve + ?Sized>(
    frame: &Frame,
    q: &[f64; 4],
    curve: &C,
    dir: TimeDir,
    range: (f64, f64),
) -> Option<(f64, [f64; 3])> {
    let h = |s: f64| {
        let a = frame.components(&sub4(&curve.point(s), q));
        let r = (a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt();
        (dir.sign() * a[0] - r, a)
    };
    let n = 116;
    let ds = (range.1 - range.0) / n as f64;
    let mut bracket = None;
    match dir {
        TimeDir::Future => {
            let mut prev = h(range.0).0;
            for i in 1..=n {
                let s = range.0 + i as f64 * ds;
                let cur = h(s).0;
                if prev < 0.0 && cur >= 0.0 {
                    bracket = Some((s - ds, s));
                    break;
                }
                prev = cur;
            }
        }
        TimeDir::Past => {
            let mut prev = h(range.1).0;
            for i in 1..=n {
                let s = range.1 - i as f64 * ds;
                let cur = h(s).0;
                if prev < 0.0 && cur >= 0.0 {
                    bracket = Some((s, s + ds));
                    break;
                }
                prev = cur;
            }
        }
    }
    let (mut lo, mut hi) = bracket?;
    let inc = matches!(dir, TimeDir::Future);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let neg = h(mid).0 < 0.0;
        if neg == inc {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let a = h(s).1;
    let sg = dir.sign();
    Some((s, [sg * a[1], sg * a[2], sg * a[3]]))
}

fn shoot_residual<M: MetricProvider, C: Curve + ?Sized>(
    m: &M,
    frame: &Frame,
    q: &[f64; 4],
    curve: &C,
    dir: TimeDir,
    n: [f64; 3],
    s: f64,
    opts: &ShootOptions,
) -> Result<(Vector4<f64>, Matrix4<f64>), CausalError> {
    let nd = [
        Dual4::variable(n[0], 0),
        Dual4::variable(n[1], 1),
        Dual4::variable(n[2], 2),
    ];
    let v = null_vector(frame, nd);
    let sg = dir.sign();
    let v = [v[0].scale(sg), v[1].scale(sg), v[2].scale(sg), v[3].scale(sg)];
    let (x, _) = flow_to(m, lift::<Dual4<f64>>(*q), v, 1.0, &opts.flow)?;
    let c = curve.point(s);
    let cv = curve.velocity(s);
    let f = Vector4::from_fn(|i, _| x[i].v - c[i]);
    let j = Matrix4::from_fn(|i, k| if k < 3 { x[i].d[k] } else { -cv[i] });
    Ok((f, j))
}

fn newton_arrival<M: MetricProvider, C: Curve + ?Sized>(
    m: &M,
    frame: &Frame,
    q: &[f64; 4],
    curve: &C,
    dir: TimeDir,
    mut n: [f64; 3],
    mut s: f64,
    opts: &ShootOptions,
) -> Result<Arrival, CausalError> {
    let mut res = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (f, j) = shoot_residual(m, frame, q, curve, dir, n, s, opts)?;
        res = f.norm();
        if res <= opts.tol {
            let v = null_vector(frame, n);
            return Ok(Arrival {
                s,
                xi: v,
                residual: res,
                iterations: it,
            });
        }
        let step = match j.lu().solve(&(-f)) {
            Some(d) => d,
            None => break,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let nn = [
                n[0] + lambda * step[0],
                n[1] + lambda * step[1],
                n[2] + lambda * step[2],
            ];
            let ns = s + lambda * step[3];
            let r = nn.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 1e-14 {
                if let Ok((f2, _)) = shoot_residual(m, frame, q, curve, dir, nn, ns, opts) {
                    if f2.norm() < res || f2.norm() <= opts.tol {
                        n = nn;
                        s = ns;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(CausalError::NoConvergence {
        what: "null shooting",
        residual: res,
    })
}

/// First (future) or last (past) arrival of light from `q` on `curve`.
pub fn null_arrival<M: MetricProvider, C: Curve + ?Sized>(
    m: &M,
    q: [f64; 4],
    curve: &C,
    dir: TimeDir,
    opts: &ShootOptions,
) -> Result<Arrival, CausalError> {
    let frame = orthonormal_frame(m, q)?;
    let (s0, n0) = flat_guess(&frame, &q, curve, dir, opts.s_range).ok_or(
        CausalError::NoConvergence {
            what: "null shooting bracket",
            residual: f64::INFINITY,
        },
    )?;
    let r0 = n0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r0 < 1e-12 {
        return Ok(Arrival {
            s: s0,
            xi: [0.0; 4],
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut best: Option<Arrival> = None;
    let mut last_err = None;
    let mut starts = vec![n0];
    if opts.extra_starts > 0 {
        let (u, w) = transverse_pair(&n0);
        for k in 0..opts.extra_starts {
            let ang = std::f64::consts::TAU * k as f64 / opts.extra_starts as f64;
            let d = 0.3 * r0;
            starts.push([
                n0[0] + d * (ang.cos() * u[0] + ang.sin() * w[0]),
                n0[1] + d * (ang.cos() * u[1] + ang.sin() * w[1]),
                n0[2] + d * (ang.cos() * u[2] + ang.sin() * w[2]),
            ]);
        }
    }
    for n in starts {
        match newton_arrival(m, &frame, &q, curve, dir, n, s0, opts) {
            Ok(a) => {
                let better = match (&best, dir) {
                    (None, _) => true,
                    (Some(b), TimeDir::Future) => a.s < b.s - 1e-12,
                    (Some(b), TimeDir::Past) => a.s > b.s + 1e-12,
                };
                if better {
                    best = Some(a);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start"))
}

pub(crate) fn transverse_pair(n: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let r = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = [n[0] / r, n[1] / r, n[2] / r];
    let seed = if t[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let d = seed[0] * t[0] + seed[1] * t[1] + seed[2] * t[2];
    let mut u = [seed[0] - d * t[0], seed[1] - d * t[1], seed[2] - d * t[2]];
    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    for c in u.iter_mut() {
        *c /= un;
    }
    let w = [
        t[1] * u[2] - t[2] * u[1],
        t[2] * u[0] - t[0] * u[2],
        t[0] * u[1] - t[1] * u[0],
    ];
    (u, w)
}

/// `inf{s : τ(x, μ(s)) > 0}` without clamping to the observer span.
pub fn f_plus_raw<M: MetricProvider>(
    m: &M,
    mu: &Observer,
    x: [f64; 4],
    opts: &ShootOptions,
) -> Result<f64, CausalError> {
    null_arrival(m, x, mu, TimeDir::Future, opts).map(|a| a.s)
}

/// `sup{s : τ(μ(s), x) > 0}` without clamping to the observer span.
pub fn f_minus_raw<M: MetricProvider>(
    m: &M,
    mu: &Observer,
    x: [f64; 4],
    opts: &ShootOptions,
) -> Result<f64, CausalError> {
    null_arrival(m, x, mu, TimeDir::Past, opts).map(|a| a.s)
}

const SPAN_TOL: f64 = 1e-9;

fn in_span(x: [f64; 4], v: f64) -> Result<f64, CausalError> {
    if !(-1.0 - SPAN_TOL..=1.0 + SPAN_TOL).contains(&v) {
        return Err(CausalError::OutOfDiamond { x, value: v });
    }
    Ok(v.clamp(-1.0, 1.0))
}

pub fn f_plus<M: MetricProvider>(
    m: &M,
    mu: &Observer,
    x: [f64; 4],
    opts: &ShootOptions,
) -> Result<f64, CausalError> {
    in_span(x, f_plus_raw(m, mu, x, opts)?)
}

pub fn f_minus<M: MetricProvider>(
    m: &M,
    mu: &Observer,
    x: [f64; 4],
    opts: &ShootOptions,
) -> Result<f64, CausalError> {
    in_span(x, f_minus_raw(m, mu, x, opts)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauOptions {
    pub flow: FlowOptions,
    /// Starting velocities per refinement ring around the chart difference.
    pub ring: usize,
    /// Relative size of the ring perturbation.
    pub spread: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TauOptions {
    fn default() -> Self {
        TauOptions {
            flow: FlowOptions::default(),
            ring: 0,
            spread: 0.3,
            max_iter: 30,
            tol: 1e-11,
        }
    }
}

fn solve_exp<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    y: [f64; 4],
    mut v: [f64; 4],
    opts: &TauOptions,
) -> Option<[f64; 4]> {
    let eval = |v: [f64; 4]| -> Option<(Vector4<f64>, Matrix4<f64>)> {
        let vd = [
            Dual4::variable(v[0], 0),
            Dual4::variable(v[1], 1),
            Dual4::variable(v[2], 2),
            Dual4::variable(v[3], 3),
        ];
        let (p, _) = flow_to(m, lift::<Dual4<f64>>(x), vd, 1.0, &opts.flow).ok()?;
        Some((
            Vector4::from_fn(|i, _| p[i].v - y[i]),
            Matrix4::from_fn(|i, k| p[i].d[k]),
        ))
    };
    for _ in 0..opts.max_iter {
        let (f, j) = eval(v)?;
        let res = f.norm();
        if res <= opts.tol {
            return Some(v);
        }
        let d = j.lu().solve(&(-f))?;
        let mut lambda = 1.0;
        let mut ok = false;
        for _ in 0..10 {
            let nv = [
                v[0] + lambda * d[0],
                v[1] + lambda * d[1],
                v[2] + lambda * d[2],
                v[3] + lambda * d[3],
            ];
            if let Some((f2, _)) = eval(nv) {
                if f2.norm() < res {
                    v = nv;
                    ok = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !ok {
            return None;
        }
    }
    None
}

/// Lorentzian time separation `τ(x, y)`, approximated from below by the
/// longest future timelike geodesic found from the starting set.
pub fn time_separation<M: MetricProvider>(m: &M, x: [f64; 4], y: [f64; 4], opts: &TauOptions) -> f64 {
    separation_avoiding(m, x, y, None, opts)
}

/// `τ(x, y)` over geodesics whose initial velocity differs from `avoid`, so
/// that the null ray through both points is not mistaken for a timelike one.
pub(crate) fn separation_avoiding<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    y: [f64; 4],
    avoid: Option<[f64; 4]>,
    opts: &TauOptions,
) -> f64 {
    let frame = match orthonormal_frame(m, x) {
        Ok(f) => f,
        Err(_) => return 0.0,
    };
    let d = sub4(&y, &x);
    let mut starts = vec![d];
    if opts.ring > 0 {
        let scale = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for k in 0..opts.ring {
            let ang = std::f64::consts::TAU * k as f64 / opts.ring as f64;
            let a = [
                0.0,
                ang.cos() * opts.spread * scale,
                ang.sin() * opts.spread * scale,
                if k % 2 == 0 { 0.5 } else { -0.5 } * opts.spread * scale,
            ];
            let p = frame.vector(&a);
            starts.push([d[0] + p[0], d[1] + p[1], d[2] + p[2], d[3] + p[3]]);
        }
    }
    let mut best = 0.0f64;
    for v0 in starts {
        if let Some(v) = solve_exp(m, x, y, v0, opts) {
            if let Some(w) = avoid {
                let gap = (0..4).map(|k| (v[k] - w[k]).powi(2)).sum::<f64>().sqrt();
                let size = w.iter().map(|c| c * c).sum::<f64>().sqrt();
                if gap <= 1e-6 * size.max(1e-12) {
                    continue;
                }
            }
            let a = frame.components(&v);
            let n = quad(&frame.g, &v, &v);
            if a[0] > 0.0 && n < 0.0 {
                best = best.max((-n).sqrt());
            }
        }
    }
    best
}
