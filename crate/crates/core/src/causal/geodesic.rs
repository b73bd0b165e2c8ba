use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::geometry::{christoffel_generic, MetricProvider};
use crate::linalg::quad;
use crate::scalar::{values, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalClass {
    Timelike,
    Null,
    Spacelike,
}

/// Classification band for `g(v,v)`.
pub const CAUSAL_BAND: f64 = 1e-10;

pub fn classify(norm: f64) -> CausalClass {
    if norm < -CAUSAL_BAND {
        CausalClass::Timelike
    } else if norm > CAUSAL_BAND {
        CausalClass::Spacelike
    } else {
        CausalClass::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub s: f64,
    pub x: [f64; 4],
    pub v: [f64; 4],
}

impl GeodesicState {
    pub fn norm<M: MetricProvider>(&self, m: &M) -> f64 {
        quad(&m.eval(self.x), &self.v, &self.v)
    }

    pub fn class<M: MetricProvider>(&self, m: &M) -> CausalClass {
        classify(self.norm(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-12,
            h_max: 0.25,
            max_steps: 200_000,
        }
    }
}

pub enum Control {
    Continue,
    Stop,
}

type State<S> = [S; 8];

fn rhs<S: Scalar, M: MetricProvider>(m: &M, y: &State<S>) -> Result<State<S>, CausalError> {
    let x = [y[0], y[1], y[2], y[3]];
    let (_, _, gam) = christoffel_generic(m, x).map_err(CausalError::Geometry)?;
    let mut out = [S::zero(); 8];
    for k in 0..4 {
        out[k] = y[4 + k];
        let mut acc = S::zero();
        for i in 0..4 {
            for j in 0..4 {
                acc += gam[k][i][j] * y[4 + i] * y[4 + j];
            }
        }
        out[4 + k] = -acc;
    }
    Ok(out)
}

/// Geodesic acceleration `-Γ^k_{ij} v^i v^j` at a plain point.
pub fn acceleration<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    v: [f64; 4],
) -> Result<[f64; 4], CausalError> {
    if m.is_flat() {
        return Ok([0.0; 4]);
    }
    let y = [x[0], x[1], x[2], x[3], v[0], v[1], v[2], v[3]];
    let f = rhs(m, &y)?;
    Ok([f[4], f[5], f[6], f[7]])
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dp_step<S: Scalar, M: MetricProvider>(
    m: &M,
    y: &State<S>,
    k1: &State<S>,
    h: f64,
) -> Result<(State<S>, State<S>, f64), CausalError> {
    let mut k = [[S::zero(); 8]; 7];
    k[0] = *k1;
    for st in 1..7 {
        let mut ys = *y;
        for (p, kp) in k.iter().enumerate().take(st) {
            let a = A[st][p];
            if a != 0.0 {
                for i in 0..8 {
                    ys[i] += kp[i].scale(h * a);
                }
            }
        }
        k[st] = rhs(m, &ys)?;
    }
    let mut ynew = *y;
    for (p, kp) in k.iter().enumerate().take(6) {
        let b = A[6][p];
        if b != 0.0 {
            for i in 0..8 {
                ynew[i] += kp[i].scale(h * b);
            }
        }
    }
    let mut err = 0.0f64;
    for i in 0..8 {
        let mut e = 0.0;
        for (p, kp) in k.iter().enumerate() {
            e += E[p] * kp[i].re();
        }
        let sc = 1.0 + y[i].re().abs().max(ynew[i].re().abs());
        err = err.max((h * e).abs() / sc);
    }
    Ok((ynew, k[6], err))
}

/// Integrates the geodesic equation from parameter 0 to `s_end` (either sign),
/// calling `monitor` after every accepted step.
pub fn flow_monitored<S: Scalar, M: MetricProvider, F>(
    m: &M,
    x0: [S; 4],
    v0: [S; 4],
    s_end: f64,
    opts: &FlowOptions,
    mut monitor: F,
) -> Result<([S; 4], [S; 4], f64), CausalError>
where
    F: FnMut(f64, &[S; 4], &[S; 4]) -> Control,
{
    let mut y: State<S> = [x0[0], x0[1], x0[2], x0[3], v0[0], v0[1], v0[2], v0[3]];
    let split = |y: &State<S>| ([y[0], y[1], y[2], y[3]], [y[4], y[5], y[6], y[7]]);
    if m.is_flat() {
        // Straight lines; the monitor still sees a uniform grid.
        let n = ((s_end.abs() / opts.h_max).ceil() as usize).max(1);
        for i in 1..=n {
            let s = s_end * i as f64 / n as f64;
            let mut x = x0;
            for k in 0..4 {
                x[k] += v0[k].scale(s);
            }
            if let Control::Stop = monitor(s, &x, &v0) {
                return Ok((x, v0, s));
            }
        }
        let mut x = x0;
        for k in 0..4 {
            x[k] += v0[k].scale(s_end);
        }
        return Ok((x, v0, s_end));
    }
    if s_end == 0.0 {
        return Ok((x0, v0, 0.0));
    }
    let dir = s_end.signum();
    let mut s = 0.0f64;
    let mut h = dir * opts.h_max.min(s_end.abs()).min(0.05);
    let mut k1 = rhs(m, &y)?;
    let mut steps = 0usize;
    while (s_end - s) * dir > 0.0 {
        if steps >= opts.max_steps {
            let (x, v) = split(&y);
            return Err(CausalError::Integration {
                last: GeodesicState {
                    s,
                    x: values(&x),
                    v: values(&v),
                },
                reason: "step budget exhausted".into(),
            });
        }
        steps += 1;
        let last = (s + h - s_end) * dir >= -1e-12 * (1.0 + s_end.abs());
        if last {
            h = s_end - s;
        }
        let (ynew, k7, err) = dp_step(m, &y, &k1, h)?;
        if !err.is_finite() {
            h *= 0.25;
        } else if err <= opts.tol {
            s = if last { s_end } else { s + h };
            y = ynew;
            k1 = k7;
            let (x, v) = split(&y);
            if let Control::Stop = monitor(s, &x, &v) {
                return Ok((x, v, s));
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * (opts.tol / err).powf(0.2)).clamp(0.2, 5.0)
            };
            h = dir * (h.abs() * fac).min(opts.h_max);
        } else {
            h *= (0.9 * (opts.tol / err).powf(0.2)).clamp(0.1, 0.9);
        }
        if (s_end - s) * dir > 0.0 && h.abs() < 1e-14 * (1.0 + s.abs()) {
            let (x, v) = split(&y);
            return Err(CausalError::Integration {
                last: GeodesicState {
                    s,
                    x: values(&x),
                    v: values(&v),
                },
                reason: "step size underflow".into(),
            });
        }
    }
    let (x, v) = split(&y);
    Ok((x, v, s_end))
}

/// Endpoint of the geodesic with initial data `(x0, v0)` at parameter `s_end`.
pub fn flow_to<S: Scalar, M: MetricProvider>(
    m: &M,
    x0: [S; 4],
    v0: [S; 4],
    s_end: f64,
    opts: &FlowOptions,
) -> Result<([S; 4], [S; 4]), CausalError> {
    flow_monitored(m, x0, v0, s_end, opts, |_, _, _| Control::Continue).map(|(x, v, _)| (x, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Node {
    s: f64,
    x: [f64; 4],
    v: [f64; 4],
    a: [f64; 4],
}

/// A geodesic sampled on a fine grid with quintic Hermite interpolation
/// between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    nodes: Vec<Node>,
    flat: bool,
}

impl GeodesicPath {
    pub fn start(&self) -> f64 {
        self.nodes.first().map(|n| n.s).unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.nodes.last().map(|n| n.s).unwrap_or(0.0)
    }

    pub fn lo(&self) -> f64 {
        self.start().min(self.end())
    }

    pub fn hi(&self) -> f64 {
        self.start().max(self.end())
    }

    pub fn states(&self) -> Vec<GeodesicState> {
        self.nodes
            .iter()
            .map(|n| GeodesicState {
                s: n.s,
                x: n.x,
                v: n.v,
            })
            .collect()
    }

    /// Position, velocity at `s` (extrapolates linearly outside the sampled range
    /// only for flat metrics).
    pub fn at(&self, s: f64) -> ([f64; 4], [f64; 4]) {
        let n0 = &self.nodes[0];
        if self.flat {
            let mut x = n0.x;
            for k in 0..4 {
                x[k] += (s - n0.s) * n0.v[k];
            }
            return (x, n0.v);
        }
        let ascending = self.end() >= self.start();
        let key = |n: &Node| if ascending { n.s } else { -n.s };
        let target = if ascending { s } else { -s };
        let idx = self.nodes.partition_point(|n| key(n) <= target);
        let i = idx.clamp(1, self.nodes.len() - 1);
        let (a, b) = (&self.nodes[i - 1], &self.nodes[i]);
        hermite5(a, b, s)
    }

    pub fn point(&self, s: f64) -> [f64; 4] {
        self.at(s).0
    }
}

fn hermite5(a: &Node, b: &Node, s: f64) -> ([f64; 4], [f64; 4]) {
    let h = b.s - a.s;
    let t = (s - a.s) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * t3 - t4 + 0.5 * t5;
    let d00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d10 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d20 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let d01 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
    let d11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d21 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
    let mut x = [0.0; 4];
    let mut v = [0.0; 4];
    for k in 0..4 {
        x[k] = h00 * a.x[k]
            + h10 * h * a.v[k]
            + h20 * h * h * a.a[k]
            + h01 * b.x[k]
            + h11 * h * b.v[k]
            + h21 * h * h * b.a[k];
        v[k] = (d00 * a.x[k]
            + d10 * h * a.v[k]
            + d20 * h * h * a.a[k]
            + d01 * b.x[k]
            + d11 * h * b.v[k]
            + d21 * h * h * b.a[k])
            / h;
    }
    (x, v)
}

/// Samples the geodesic `s ↦ exp_{x0}(s v0)` for `s` between 0 and `s_max`.
pub fn geodesic_flow<M: MetricProvider>(
    m: &M,
    x0: [f64; 4],
    v0: [f64; 4],
    s_max: f64,
    opts: &FlowOptions,
) -> Result<GeodesicPath, CausalError> {
    let a0 = acceleration(m, x0, v0)?;
    let mut nodes = vec![Node {
        s: 0.0,
        x: x0,
        v: v0,
        a: a0,
    }];
    if m.is_flat() {
        let mut x = x0;
        for k in 0..4 {
            x[k] += s_max * v0[k];
        }
        nodes.push(Node {
            s: s_max,
            x,
            v: v0,
            a: [0.0; 4],
        });
        return Ok(GeodesicPath { nodes, flat: true });
    }
    let mut failure = None;
    let sampling = FlowOptions {
        h_max: opts.h_max.min(0.05),
        ..*opts
    };
    flow_monitored(m, x0, v0, s_max, &sampling, |s, x, v| match acceleration(m, *x, *v) {
        Ok(a) => {
            nodes.push(Node { s, x: *x, v: *v, a });
            Control::Continue
        }
        Err(e) => {
            failure = Some(e);
            Control::Stop
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(GeodesicPath { nodes, flat: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    #[test]
    fn minkowski_lines_are_exact() {
        let p = geodesic_flow(
            &Metric::Minkowski,
            [0.1, 0.2, 0.3, 0.4],
            [1.0, 0.5, -0.2, 0.1],
            3.0,
            &FlowOptions::default(),
        )
        .unwrap();
        let (x, v) = p.at(2.5);
        let expect = [2.6, 1.45, -0.2, 0.65];
        for k in 0..4 {
            assert!((x[k] - expect[k]).abs() < 1e-12);
        }
        assert_eq!(v, [1.0, 0.5, -0.2, 0.1]);
    }

    #[test]
    fn desitter_null_norm_is_conserved() {
        let m = Metric::DesitterLike;
        let x0 = [0.0, 0.1, -0.2, 0.05];
        let v0 = [1.0, 0.6, 0.8, 0.0];
        let opts = FlowOptions::default();
        let p = geodesic_flow(&m, x0, v0, 5.0, &opts).unwrap();
        for st in p.states() {
            assert!(st.norm(&m).abs() < 1e-10, "s = {}: {}", st.s, st.norm(&m));
            assert_eq!(st.class(&m), CausalClass::Null);
        }
    }

    #[test]
    fn flow_is_reversible() {
        let m = Metric::product(0.1, 0.8);
        let x0 = [0.0, 0.3, -0.1, 0.2];
        let v0 = [1.0, -0.4, 0.5, 0.3];
        let opts = FlowOptions::default();
        let (x1, v1) = flow_to(&m, x0, v0, 1.5, &opts).unwrap();
        let (x2, _) = flow_to(&m, x1, v1, -1.5, &opts).unwrap();
        for k in 0..4 {
            assert!((x2[k] - x0[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_matches_direct_flow() {
        let m = Metric::lens(0.6, 0.5);
        let x0 = [0.0, -1.0, 0.2, 0.0];
        let v0 = [1.0, 1.0, 0.0, 0.0];
        let opts = FlowOptions::default();
        let p = geodesic_flow(&m, x0, v0, 2.0, &opts).unwrap();
        for s in [0.013, 0.77, 1.234, 1.999] {
            let (x, v) = flow_to(&m, x0, v0, s, &opts).unwrap();
            let (xi, vi) = p.at(s);
            for k in 0..4 {
                assert!((x[k] - xi[k]).abs() < 1e-10);
                assert!((v[k] - vi[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn backward_paths_interpolate() {
        let m = Metric::product(0.1, 0.8);
        let opts = FlowOptions::default();
        let p = geodesic_flow(&m, [0.0; 4], [1.0, 0.5, 0.0, 0.0], -1.0, &opts).unwrap();
        let (x, _) = flow_to(&m, [0.0; 4], [1.0, 0.5, 0.0, 0.0], -0.4, &opts).unwrap();
        assert!((p.point(-0.4)[1] - x[1]).abs() < 1e-10);
    }
}
