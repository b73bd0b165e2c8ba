use nalgebra::{DMatrix, DVector, Matrix4x3, Vector4};
use serde::{Deserialize, Serialize};

use super::cut::{cut_locus, CutOptions};
use super::geodesic::{flow_to, geodesic_flow, FlowOptions, GeodesicPath};
use super::observer::{Curve, ObservationRecord, Observer, ObserverFamily};
use super::shooting::{
    f_plus_raw, null_vector, orthonormal_frame, transverse_pair, ShootOptions,
};
use super::CausalError;
use crate::geometry::MetricProvider;
use crate::linalg::{dist4, sub4};
use crate::scalar::{Dual4, Scalar};

/// A set of spacetime points that can be tested against an observer curve.
pub trait PointSet {
    /// Smallest `s` in `[lo, hi]` with `μ(s)` within `eps` of the set.
    fn first_hit<M: MetricProvider>(
        &self,
        m: &M,
        mu: &Observer,
        range: (f64, f64),
        eps: f64,
    ) -> Option<f64>;
}

/// A finite sample of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSet {
    pub points: Vec<[f64; 4]>,
}

fn closest_on_curve(mu: &Observer, p: &[f64; 4], range: (f64, f64)) -> (f64, f64) {
    let n = 400;
    let ds = (range.1 - range.0) / n as f64;
    let mut best = (range.0, f64::INFINITY);
    for i in 0..=n {
        let s = range.0 + i as f64 * ds;
        let d = dist4(&mu.point(s), p);
        if d < best.1 {
            best = (s, d);
        }
    }
    let (mut a, mut b) = ((best.0 - ds).max(range.0), (best.0 + ds).min(range.1));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let f = |s: f64| dist4(&mu.point(s), p);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let s = 0.5 * (a + b);
    let ds = f(s);
    if ds < best.1 {
        (s, ds)
    } else {
        best
    }
}

impl PointSet for SampledSet {
    fn first_hit<M: MetricProvider>(
        &self,
        _m: &M,
        mu: &Observer,
        range: (f64, f64),
        eps: f64,
    ) -> Option<f64> {
        self.points
            .iter()
            .map(|p| closest_on_curve(mu, p, range))
            .filter(|(_, d)| *d <= eps)
            .map(|(s, _)| s)
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))))
    }
}

/// The future light cone `𝓛⁺(q) ∪ {q}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightCone {
    pub q: [f64; 4],
    pub shoot: ShootOptions,
}

impl LightCone {
    pub fn new(q: [f64; 4]) -> Self {
        LightCone {
            q,
            shoot: ShootOptions::default(),
        }
    }
}

impl PointSet for LightCone {
    fn first_hit<M: MetricProvider>(
        &self,
        m: &M,
        mu: &Observer,
        range: (f64, f64),
        _eps: f64,
    ) -> Option<f64> {
        let opts = ShootOptions {
            s_range: (range.0 - 1.0, range.1 + 1.0),
            ..self.shoot
        };
        let s = f_plus_raw(m, mu, self.q, &opts).ok()?;
        (range.0..=range.1).contains(&s).then_some(s)
    }
}

/// Earliest point of `w` on the observer over the span `[-1, 1]`.
pub fn earliest_point<M: MetricProvider, W: PointSet>(
    m: &M,
    mu: &Observer,
    w: &W,
    eps: f64,
) -> Option<([f64; 4], f64)> {
    w.first_hit(m, mu, (-1.0, 1.0), eps)
        .map(|s| (mu.point(s), s))
}

/// The `f⁺` values of `q` over the family; observers not reached by the cone
/// within the span record the endpoint convention 1.
pub fn earliest_light_observation_set<M: MetricProvider>(
    m: &M,
    q: [f64; 4],
    family: &ObserverFamily,
    shoot: &ShootOptions,
) -> ObservationRecord {
    let values = family
        .observers
        .iter()
        .map(|mu| match f_plus_raw(m, mu, q, shoot) {
            Ok(s) => s.clamp(-1.0, 1.0),
            Err(_) => 1.0,
        })
        .collect();
    ObservationRecord { q, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub x: [f64; 4],
    pub xi: [f64; 4],
}

pub type RayTuple = [Ray; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionOptions {
    pub t0: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Restrict each ray to parameters before its cut point.
    pub respect_cut: bool,
    pub cut: CutOptions,
    pub flow: FlowOptions,
    pub grid: usize,
}

impl Default for IntersectionOptions {
    fn default() -> Self {
        IntersectionOptions {
            t0: 0.0,
            t_max: 3.0,
            tol: 1e-8,
            respect_cut: true,
            cut: CutOptions::default(),
            flow: FlowOptions {
                h_max: 0.05,
                ..FlowOptions::default()
            },
            grid: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub q: [f64; 4],
    pub params: [f64; 4],
    /// Number of distinct common points found within tolerance.
    pub multiplicity: usize,
}

fn refine(
    m: &impl MetricProvider,
    tuple: &RayTuple,
    mut t: [f64; 4],
    limits: &[(f64, f64); 4],
    flow: &FlowOptions,
) -> Result<([f64; 4], [f64; 4], f64), CausalError> {
    let eval = |t: &[f64; 4]| -> Result<([[f64; 4]; 4], [[f64; 4]; 4]), CausalError> {
        let mut xs = [[0.0; 4]; 4];
        let mut vs = [[0.0; 4]; 4];
        for j in 0..4 {
            let (x, v) = flow_to(m, tuple[j].x, tuple[j].xi, t[j], flow)?;
            xs[j] = x;
            vs[j] = v;
        }
        Ok((xs, vs))
    };
    let resid = |xs: &[[f64; 4]; 4]| {
        let mut r = DVector::zeros(12);
        for j in 1..4 {
            for k in 0..4 {
                r[4 * (j - 1) + k] = xs[j][k] - xs[0][k];
            }
        }
        r
    };
    let (mut xs, mut vs) = eval(&t)?;
    let mut r = resid(&xs);
    let mut mu = 1e-6;
    for _ in 0..60 {
        if r.norm() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(12, 4);
        for j in 1..4 {
            for k in 0..4 {
                jac[(4 * (j - 1) + k, 0)] = -vs[0][k];
                jac[(4 * (j - 1) + k, j)] = vs[j][k];
            }
        }
        let jt = jac.transpose();
        let mut improved = false;
        for _ in 0..10 {
            let a = &jt * &jac + DMatrix::identity(4, 4) * mu;
            let Some(step) = a.lu().solve(&(-(&jt * &r))) else {
                break;
            };
            let mut nt = t;
            for j in 0..4 {
                nt[j] = (t[j] + step[j]).clamp(limits[j].0, limits[j].1);
            }
            let (nx, nv) = eval(&nt)?;
            let nr = resid(&nx);
            if nr.norm() < r.norm() {
                t = nt;
                xs = nx;
                vs = nv;
                r = nr;
                mu = (mu * 0.1).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let mut q = [0.0; 4];
    for j in 0..4 {
        for k in 0..4 {
            q[k] += 0.25 * xs[j][k];
        }
    }
    let spread = xs.iter().map(|x| dist4(x, &q)).fold(0.0, f64::max);
    Ok((q, t, spread))
}

/// Earliest common point of four null geodesics on the parameter window
/// `(t0, min(t_max, ρ_j))`.
pub fn intersection_point<M: MetricProvider>(
    m: &M,
    tuple: &RayTuple,
    opts: &IntersectionOptions,
) -> Result<Option<Intersection>, CausalError> {
    let mut limits = [(opts.t0, opts.t_max); 4];
    if opts.respect_cut {
        for j in 0..4 {
            let c = cut_locus(
                m,
                tuple[j].x,
                tuple[j].xi,
                &CutOptions {
                    s_max: opts.t_max,
                    ..opts.cut
                },
            )?;
            limits[j].1 = limits[j].1.min(c.rho);
        }
    }
    if limits.iter().any(|(a, b)| b <= a) {
        return Ok(None);
    }
    let paths: Vec<GeodesicPath> = tuple
        .iter()
        .zip(limits.iter())
        .map(|(r, l)| geodesic_flow(m, r.x, r.xi, l.1, &opts.flow))
        .collect::<Result<_, _>>()?;
    let n = opts.grid.max(10);
    let samples: Vec<Vec<(f64, [f64; 4])>> = paths
        .iter()
        .zip(limits.iter())
        .map(|(p, l)| {
            (0..=n)
                .map(|i| {
                    let t = l.0 + (l.1 - l.0) * i as f64 / n as f64;
                    (t, p.point(t))
                })
                .collect()
        })
        .collect();
    // Coarse distance profile along the first ray.
    let mut profile = Vec::with_capacity(n + 1);
    for &(t1, p1) in &samples[0] {
        let mut worst = 0.0f64;
        let mut ts = [t1, 0.0, 0.0, 0.0];
        for j in 1..4 {
            let (tj, d) = samples[j]
                .iter()
                .map(|(t, p)| (*t, dist4(p, &p1)))
                .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            ts[j] = tj;
            worst = worst.max(d);
        }
        profile.push((worst, ts));
    }
    let step = samples
        .iter()
        .flat_map(|s| s.windows(2).map(|w| dist4(&w[0].1, &w[1].1)))
        .fold(0.0, f64::max);
    let mut found: Vec<([f64; 4], [f64; 4])> = Vec::new();
    for i in 0..profile.len() {
        let d = profile[i].0;
        let left = if i > 0 { profile[i - 1].0 } else { f64::INFINITY };
        let right = profile.get(i + 1).map_or(f64::INFINITY, |p| p.0);
        if d > left || d > right || d > 4.0 * step + opts.tol {
            continue;
        }
        let (q, t, spread) = refine(m, tuple, profile[i].1, &limits, &opts.flow)?;
        let interior = (0..4).all(|j| t[j] > limits[j].0 && t[j] < limits[j].1);
        if spread <= opts.tol && interior && !found.iter().any(|(p, _)| dist4(p, &q) < 1e-6) {
            found.push((q, t));
        }
    }
    found.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    Ok(found.first().map(|(q, t)| Intersection {
        q: *q,
        params: *t,
        multiplicity: found.len(),
    }))
}

/// Future null `ξ` at `y` with `exp_y(ξ) = q`.
pub fn null_connection_to_point<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    q: [f64; 4],
    flow: &FlowOptions,
) -> Result<[f64; 4], CausalError> {
    let (xi, res) = nearest_null_connection(m, y, q, flow)?;
    if res > 1e-9 {
        return Err(CausalError::NoNullConnection { residual: res });
    }
    Ok(xi)
}

/// Least-squares fit of `exp_y(ξ) ≈ q` over future null `ξ`, with the chart
/// distance left between the two points.
pub fn nearest_null_connection<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    q: [f64; 4],
    flow: &FlowOptions,
) -> Result<([f64; 4], f64), CausalError> {
    let frame = orthonormal_frame(m, y)?;
    let a = frame.components(&sub4(&q, &y));
    let mut n = [a[1], a[2], a[3]];
    if n.iter().map(|v| v * v).sum::<f64>() < 1e-24 {
        return Err(CausalError::NoNullConnection { residual: a[0].abs() });
    }
    let eval = |n: [f64; 3]| -> Result<(Vector4<f64>, Matrix4x3<f64>), CausalError> {
        let nd = [
            Dual4::variable(n[0], 0),
            Dual4::variable(n[1], 1),
            Dual4::variable(n[2], 2),
        ];
        let v = null_vector(&frame, nd);
        let y0 = [
            Dual4::constant(y[0]),
            Dual4::constant(y[1]),
            Dual4::constant(y[2]),
            Dual4::constant(y[3]),
        ];
        let (x, _) = flow_to(m, y0, v, 1.0, flow)?;
        Ok((
            Vector4::from_fn(|i, _| x[i].re() - q[i]),
            Matrix4x3::from_fn(|i, k| x[i].d[k]),
        ))
    };
    let (mut f, mut j) = eval(n)?;
    for _ in 0..50 {
        if f.norm() < 1e-12 {
            break;
        }
        let jt = j.transpose();
        let Some(step) = (jt * j).lu().solve(&(-(jt * f))) else {
            break;
        };
        let mut lambda = 1.0;
        let mut ok = false;
        for _ in 0..12 {
            let nn = [
                n[0] + lambda * step[0],
                n[1] + lambda * step[1],
                n[2] + lambda * step[2],
            ];
            if let Ok((nf, nj)) = eval(nn) {
                if nf.norm() < f.norm() {
                    n = nn;
                    f = nf;
                    j = nj;
                    ok = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !ok {
            break;
        }
    }
    Ok((null_vector(&frame, n), f.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TupleOptions {
    /// Spatial perturbation radius `ϑ` of the three extra directions at `q`.
    pub radius: f64,
    pub count: usize,
    /// Parameter length of the extra rays from their start to `q`.
    pub back: f64,
    pub intersection: IntersectionOptions,
}

impl Default for TupleOptions {
    fn default() -> Self {
        TupleOptions {
            radius: 0.1,
            count: 1,
            back: 1.0,
            intersection: IntersectionOptions {
                respect_cut: false,
                ..IntersectionOptions::default()
            },
        }
    }
}

/// Ray tuples meeting at `q` whose first member starts at `y` with the null
/// direction connecting `y` to `q`. Each tuple is checked by re-intersection.
pub fn direction_tuples_for<M: MetricProvider>(
    m: &M,
    q: [f64; 4],
    y: [f64; 4],
    opts: &TupleOptions,
) -> Result<Vec<RayTuple>, CausalError> {
    let flow = opts.intersection.flow;
    let zeta = null_connection_to_point(m, y, q, &flow)?;
    let (_, eta0) = flow_to(m, y, zeta, 1.0, &flow)?;
    let frame = orthonormal_frame(m, q)?;
    let a = frame.components(&eta0);
    let r = (a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt();
    let u0 = [a[1] / r, a[2] / r, a[3] / r];
    let (e1, e2) = transverse_pair(&u0);
    let mut out = Vec::new();
    let third = std::f64::consts::TAU / 3.0;
    for c in 0..opts.count.max(1) {
        let rot = third * c as f64 / opts.count.max(1) as f64;
        let mut tuple = [Ray { x: y, xi: zeta }; 4];
        for (j, ray) in tuple.iter_mut().enumerate().skip(1) {
            let phi = rot + third * (j - 1) as f64;
            let mut u = [0.0; 3];
            for k in 0..3 {
                u[k] = u0[k] + opts.radius * (phi.cos() * e1[k] + phi.sin() * e2[k]);
            }
            let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n = [u[0] * r / un, u[1] * r / un, u[2] * r / un];
            let eta = null_vector(&frame, n);
            let (x, v) = flow_to(m, q, eta, -opts.back, &flow)?;
            *ray = Ray { x, xi: v };
        }
        let io = IntersectionOptions {
            t_max: opts.intersection.t_max.max(1.5 * opts.back.max(1.0)),
            ..opts.intersection
        };
        match intersection_point(m, &tuple, &io)? {
            Some(hit) if dist4(&hit.q, &q) <= 1e-8 => out.push(tuple),
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(CausalError::Tuple("no tuple re-intersects the target point".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::observer::FamilyConfig;
    use crate::geometry::Metric;
    use crate::linalg::quad;

    #[test]
    fn earliest_of_two_observer_points() {
        let m = Metric::Minkowski;
        let mu = Observer::new(&m, [0.0; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
        let w = SampledSet {
            points: vec![mu.point(0.7), mu.point(0.3)],
        };
        let (p, s) = earliest_point(&m, &mu, &w, 1e-6).unwrap();
        assert!((s - 0.3).abs() < 1e-9 && dist4(&p, &mu.point(0.3)) < 1e-9);
        let far = SampledSet {
            points: vec![[0.0, 0.5, 0.0, 0.0]],
        };
        assert!(earliest_point(&m, &mu, &far, 1e-6).is_none());
    }

    #[test]
    fn light_cone_hit_is_flat_formula() {
        let m = Metric::Minkowski;
        let mu = Observer::new(&m, [0.0; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
        let q = [-0.6, 0.2, -0.1, 0.3];
        let (_, s) = earliest_point(&m, &mu, &LightCone::new(q), 1e-6).unwrap();
        assert!((s - (-0.6 + 0.14f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn record_matches_flat_formula() {
        let m = Metric::Minkowski;
        let fam = ObserverFamily::new(&m, FamilyConfig::default()).unwrap();
        let q = [-0.4, 0.1, 0.2, -0.1];
        let rec = earliest_light_observation_set(&m, q, &fam, &ShootOptions::default());
        for (mu, v) in fam.observers.iter().zip(rec.values.iter()) {
            if mu.eta == [1.0, 0.0, 0.0, 0.0] {
                let want = q[0] + dist4(&[0.0, q[1], q[2], q[3]], &[0.0, mu.z[1], mu.z[2], mu.z[3]]);
                assert!((v - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tuple_round_trip_in_minkowski() {
        let m = Metric::Minkowski;
        let q = [-0.2, 0.1, 0.0, 0.1];
        let y = [-0.8, 0.46, 0.48, 0.1];
        let xi = null_connection_to_point(&m, y, q, &FlowOptions::default()).unwrap();
        assert!(quad(&m.eval(y), &xi, &xi).abs() < 1e-12);
        let tuples = direction_tuples_for(&m, q, y, &TupleOptions { count: 2, ..TupleOptions::default() }).unwrap();
        assert_eq!(tuples.len(), 2);
        for t in &tuples {
            let hit = intersection_point(&m, t, &IntersectionOptions::default()).unwrap().unwrap();
            assert!(dist4(&hit.q, &q) < 1e-8);
            for i in 0..4 {
                for j in i + 1..4 {
                    let (a, b) = (t[i].xi, t[j].xi);
                    let (_, va) = flow_to(&m, t[i].x, a, 1.0, &FlowOptions::default()).unwrap();
                    let (_, vb) = flow_to(&m, t[j].x, b, 1.0, &FlowOptions::default()).unwrap();
                    assert!(quad(&m.eval(q), &va, &vb).abs() > 1e-6);
                }
            }
        }
    }

    #[test]
    fn missing_tuple_gives_nothing() {
        let m = Metric::Minkowski;
        let q = [-0.2, 0.1, 0.0, 0.1];
        let y = [-0.8, 0.46, 0.48, 0.1];
        let mut t = direction_tuples_for(&m, q, y, &TupleOptions::default()).unwrap()[0];
        t[2].x[2] += 0.1;
        let hit = intersection_point(&m, &t, &IntersectionOptions::default()).unwrap();
        assert!(hit.is_none());
    }
}
