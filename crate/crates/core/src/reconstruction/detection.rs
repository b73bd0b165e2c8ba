use serde::{Deserialize, Serialize};

use super::ReconstructionError;
use crate::causal::{
    cut_locus, earliest_point, Curve, flow_to, geodesic_flow, intersection_point, nearest_null_connection,
    null_arrival, null_vector, orthonormal_frame, CausalError, CutKind, CutOptions, FlowOptions,
    IntersectionOptions, ObservationRecord, Observer, ObserverFamily, PointSet, RayTuple, ShootOptions,
    TimeDir, VerticalLine,
};
use crate::geometry::MetricProvider;
use crate::linalg::{dist4, sub4};

/// The observation neighbourhood `U`: a coordinate cylinder around the
/// observer family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_range: (f64, f64),
}

impl Default for Region {
    fn default() -> Self {
        Region {
            center: [0.0; 3],
            radius: 0.35,
            t_range: (-1.2, 1.2),
        }
    }
}

impl Region {
    pub fn contains(&self, x: &[f64; 4]) -> bool {
        let r2: f64 = (0..3).map(|i| (x[i + 1] - self.center[i]).powi(2)).sum();
        r2 <= self.radius * self.radius && x[0] >= self.t_range.0 && x[0] <= self.t_range.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOptions {
    /// Hit tolerance `ε` for cone membership.
    pub eps: f64,
    pub t0: f64,
    pub intersection: IntersectionOptions,
    pub shoot: ShootOptions,
    /// Radius `ϑ₁` of the admissibility clauses (ii) and (iii).
    pub theta1: f64,
    pub region: Region,
    pub sample_dirs: usize,
    pub sample_steps: usize,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        DetectionOptions {
            eps: 1e-3,
            t0: 0.0,
            intersection: IntersectionOptions::default(),
            shoot: ShootOptions::default(),
            theta1: 1.0,
            region: Region::default(),
            sample_dirs: 48,
            sample_steps: 16,
        }
    }
}

impl DetectionOptions {
    fn intersection_opts(&self) -> IntersectionOptions {
        IntersectionOptions {
            t0: self.t0,
            ..self.intersection
        }
    }

    fn checks_cuts<M: MetricProvider>(&self, m: &M) -> bool {
        self.intersection.respect_cut && !m.is_flat()
    }
}

/// Meeting point `q` of a tuple together with the null geodesic
/// `y = γ_{q,ζ}(t)`. `ζ` has unit time component in an orthonormal frame at `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionI {
    pub q: [f64; 4],
    pub zeta: [f64; 4],
    pub t: f64,
    /// Chart distance between `γ_{q,ζ}(t)` and `y`.
    pub residual: f64,
}

/// Condition (I): the four rays meet at `q` before their cut points and `y`
/// lies on the future light cone of `q` before the cut point of `γ_{q,ζ}`.
pub fn condition_i<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    tuple: &RayTuple,
    opts: &DetectionOptions,
) -> Result<Option<ConditionI>, ReconstructionError> {
    let Some(hit) = intersection_point(m, tuple, &opts.intersection_opts())? else {
        return Ok(None);
    };
    let q = hit.q;
    if dist4(&q, &y) <= opts.eps {
        return Ok(None);
    }
    let flow = opts.intersection.flow;
    let Ok((v, residual)) = nearest_null_connection(m, q, y, &flow) else {
        return Ok(None);
    };
    if !(residual <= opts.eps) {
        return Ok(None);
    }
    let frame = orthonormal_frame(m, q)?;
    let t = frame.components(&v)[0];
    if !(t > 0.0) {
        return Ok(None);
    }
    let zeta = v.map(|c| c / t);
    if opts.checks_cuts(m) {
        let cut = cut_locus(
            m,
            q,
            zeta,
            &CutOptions {
                s_max: 1.5 * t,
                ..opts.intersection.cut
            },
        )?;
        if cut.kind != CutKind::Horizon && cut.rho <= t {
            return Ok(None);
        }
    }
    Ok(Some(ConditionI { q, zeta, t, residual }))
}

/// Coordinate-time offset from `y` to the future light cone of `q` along the
/// vertical line through `y`: negative inside the cone, positive below it.
pub fn cone_offset<M: MetricProvider>(m: &M, q: [f64; 4], y: [f64; 4], shoot: &ShootOptions) -> Option<f64> {
    null_arrival(m, q, &VerticalLine { base: y }, TimeDir::Future, shoot)
        .ok()
        .map(|a| a.s)
}

/// `y ∈ J⁺(x)`.
pub fn in_causal_future<M: MetricProvider>(m: &M, x: [f64; 4], y: [f64; 4], shoot: &ShootOptions) -> bool {
    if dist4(&x, &y) < 1e-12 {
        return true;
    }
    cone_offset(m, x, y, shoot).is_some_and(|s| s <= 1e-10)
}

fn segment_distance(a: &[f64; 4], b: &[f64; 4], y: &[f64; 4]) -> f64 {
    let d = sub4(b, a);
    let w = sub4(y, a);
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let t = if dd > 0.0 {
        (d.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>() / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2], a[3] + t * d[3]];
    dist4(&p, y)
}

/// Chart distance from `y` to the union of the four rays on `[0, s_max]`.
/// Probes closer than a few `ε` sit where the three-wave interactions of the
/// tuple can add singularities of their own.
pub fn messy_tube_distance<M: MetricProvider>(
    m: &M,
    tuple: &RayTuple,
    y: [f64; 4],
    s_max: f64,
    flow: &FlowOptions,
) -> Result<f64, ReconstructionError> {
    let n = 400;
    let mut best = f64::INFINITY;
    for ray in tuple {
        let path = geodesic_flow(m, ray.x, ray.xi, s_max, flow)?;
        let mut prev = path.point(0.0);
        for i in 1..=n {
            let p = path.point(s_max * i as f64 / n as f64);
            best = best.min(segment_distance(&prev, &p, &y));
            prev = p;
        }
    }
    Ok(best)
}

fn unit_time(xi: &[f64; 4]) -> [f64; 4] {
    xi.map(|c| c / xi[0])
}

/// Admissibility clauses (i)-(iii) of a ray tuple relative to the central
/// observer.
pub fn check_admissible<M: MetricProvider>(
    m: &M,
    tuple: &RayTuple,
    mu: &Observer,
    opts: &DetectionOptions,
) -> Result<(), ReconstructionError> {
    let flow = opts.intersection.flow;
    let mut starts = [[0.0; 4]; 4];
    for (j, ray) in tuple.iter().enumerate() {
        if !(ray.xi[0] > 0.0) {
            return Err(ReconstructionError::Causal(CausalError::NotNull));
        }
        starts[j] = flow_to(m, ray.x, ray.xi, opts.t0, &flow)?.0;
    }
    for j in 0..4 {
        for k in 0..4 {
            if j != k && in_causal_future(m, starts[k], starts[j], &opts.shoot) {
                return Err(ReconstructionError::Inadmissible {
                    clause: "(i) mutual causality",
                    detail: format!("x{}(t0) lies in the causal future of x{}(t0)", j + 1, k + 1),
                });
            }
        }
    }
    for j in 0..4 {
        for k in j + 1..4 {
            let a = unit_time(&tuple[j].xi);
            let b = unit_time(&tuple[k].xi);
            let d = (dist4(&tuple[j].x, &tuple[k].x).powi(2) + dist4(&a, &b).powi(2)).sqrt();
            if d >= opts.theta1 {
                return Err(ReconstructionError::Inadmissible {
                    clause: "(ii) ray proximity",
                    detail: format!("rays {} and {} are {d:.4} apart, limit {}", j + 1, k + 1, opts.theta1),
                });
            }
        }
    }
    let near = (0..=200).any(|i| {
        let p = mu.point(-1.0 + 0.01 * i as f64);
        tuple.iter().all(|r| dist4(&p, &r.x) < opts.theta1)
    });
    if !near {
        return Err(ReconstructionError::Inadmissible {
            clause: "(iii) observer proximity",
            detail: format!("no observer point within {} of every ray start", opts.theta1),
        });
    }
    Ok(())
}

/// Simulated detection of the singularity produced by a ray tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub tuple: RayTuple,
    pub t0: f64,
    /// Meeting point of the rays, when they meet before their cut points.
    pub q: Option<[f64; 4]>,
    /// Cut points after `t0`; the pre-cut region is the complement of their
    /// causal futures.
    pub cuts: Vec<[f64; 4]>,
    /// Points of the closure `𝒮^cl = 𝓛⁺(q) ∩ U` inside the pre-cut region.
    pub sample: Vec<[f64; 4]>,
    /// Earliest point per observer, `None` when nothing is detected.
    pub earliest: Option<ObservationRecord>,
    pub region: Region,
    pub eps: f64,
    #[serde(skip)]
    shoot: ShootOptions,
}

impl DetectionSet {
    pub fn is_empty(&self) -> bool {
        self.q.is_none()
    }

    /// Pre-cut region membership.
    pub fn in_precut<M: MetricProvider>(&self, m: &M, x: [f64; 4]) -> bool {
        self.cuts.iter().all(|c| !in_causal_future(m, *c, x, &self.shoot))
    }

    /// Membership of `y` in `𝒮^cl` within the hit tolerance, decided from the
    /// vertical offset to the cone.
    pub fn contains<M: MetricProvider>(&self, m: &M, y: [f64; 4]) -> bool {
        let Some(q) = self.q else { return false };
        if !self.region.contains(&y) || dist4(&q, &y) <= self.eps {
            return false;
        }
        let on_cone = cone_offset(m, q, y, &self.shoot).is_some_and(|s| s.abs() <= self.eps);
        on_cone && self.in_precut(m, y)
    }
}

impl PointSet for DetectionSet {
    fn first_hit<M: MetricProvider>(&self, m: &M, mu: &Observer, range: (f64, f64), _eps: f64) -> Option<f64> {
        let q = self.q?;
        let shoot = ShootOptions {
            s_range: (range.0 - 1.0, range.1 + 1.0),
            ..self.shoot
        };
        let a = null_arrival(m, q, mu, TimeDir::Future, &shoot).ok()?;
        let p = mu.point(a.s);
        let inside = (range.0..=range.1).contains(&a.s) && self.region.contains(&p) && self.in_precut(m, p);
        inside.then_some(a.s)
    }
}

fn sphere_points(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

pub(crate) fn unit_sphere(n: usize) -> Vec<[f64; 3]> {
    sphere_points(n)
}

/// Detection set of a tuple: its meeting point, a sample of `𝒮^cl` and the
/// earliest observations over the family.
pub fn detection_set<M: MetricProvider>(
    m: &M,
    tuple: &RayTuple,
    family: &ObserverFamily,
    opts: &DetectionOptions,
) -> Result<DetectionSet, ReconstructionError> {
    check_admissible(m, tuple, family.central(), opts)?;
    let flow = opts.intersection.flow;
    let mut cuts = Vec::new();
    if opts.checks_cuts(m) {
        for ray in tuple {
            let (x, xi) = flow_to(m, ray.x, ray.xi, opts.t0, &flow)?;
            let c = cut_locus(
                m,
                x,
                xi,
                &CutOptions {
                    s_max: opts.intersection.t_max,
                    ..opts.intersection.cut
                },
            )?;
            if c.kind != CutKind::Horizon {
                cuts.push(flow_to(m, x, xi, c.rho, &flow)?.0);
            }
        }
    }
    let q = intersection_point(m, tuple, &opts.intersection_opts())?.map(|h| h.q);
    let mut set = DetectionSet {
        tuple: *tuple,
        t0: opts.t0,
        q,
        cuts,
        sample: Vec::new(),
        earliest: None,
        region: opts.region,
        eps: opts.eps,
        shoot: opts.shoot,
    };
    let Some(q) = q else { return Ok(set) };
    let frame = orthonormal_frame(m, q)?;
    let reach = 2.0 * (opts.region.t_range.1 - q[0]).max(0.0);
    for n in sphere_points(opts.sample_dirs) {
        let v = null_vector(&frame, n);
        let path = geodesic_flow(m, q, v, reach, &flow)?;
        for k in 1..=opts.sample_steps {
            let x = path.point(reach * k as f64 / opts.sample_steps as f64);
            if opts.region.contains(&x) && set.in_precut(m, x) {
                set.sample.push(x);
            }
        }
    }
    let values = family
        .observers
        .iter()
        .map(|mu| earliest_point(m, mu, &set, opts.eps).map_or(1.0, |(_, s)| s))
        .collect();
    set.earliest = Some(ObservationRecord { q, values });
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{
        direction_tuples_for, earliest_light_observation_set, FamilyConfig, Ray, TupleOptions,
    };
    use crate::geometry::Metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tuple_through(q: [f64; 4], n: [f64; 3]) -> RayTuple {
        let y = [q[0] - 0.45, q[1] - 0.45 * n[0], q[2] - 0.45 * n[1], q[3] - 0.45 * n[2]];
        direction_tuples_for(&Metric::Minkowski, q, y, &TupleOptions::default()).unwrap()[0]
    }

    fn family() -> ObserverFamily {
        ObserverFamily::new(&Metric::Minkowski, FamilyConfig::default()).unwrap()
    }

    #[test]
    fn condition_i_recovers_cone_point() {
        let m = Metric::Minkowski;
        let q = [-0.2, 0.1, 0.0, 0.1];
        let tuple = tuple_through(q, [-0.6, -0.8, 0.0]);
        let n = [0.6, -0.48, 0.64];
        let y = [q[0] + 0.3, q[1] + 0.3 * n[0], q[2] + 0.3 * n[1], q[3] + 0.3 * n[2]];
        let c = condition_i(&m, y, &tuple, &DetectionOptions::default()).unwrap().unwrap();
        assert!(dist4(&c.q, &q) < 1e-8);
        let on = [0, 1, 2, 3].map(|k| c.q[k] + c.t * c.zeta[k]);
        assert!(dist4(&on, &y) <= 1e-8, "{on:?}");
        assert!((c.t - 0.3).abs() < 1e-8);
    }

    #[test]
    fn condition_i_rejects_interior_and_past_points() {
        let m = Metric::Minkowski;
        let q = [-0.2, 0.1, 0.0, 0.1];
        let tuple = tuple_through(q, [-0.6, -0.8, 0.0]);
        let o = DetectionOptions::default();
        assert!(condition_i(&m, [0.2, 0.1, 0.05, 0.1], &tuple, &o).unwrap().is_none());
        assert!(condition_i(&m, [-0.5, 0.2, 0.0, 0.1], &tuple, &o).unwrap().is_none());
    }

    #[test]
    fn earliest_record_matches_direct_observation() {
        let m = Metric::Minkowski;
        let fam = family();
        let q = [-0.15, 0.05, -0.1, 0.08];
        let tuple = tuple_through(q, [0.0, -0.6, 0.8]);
        let set = detection_set(&m, &tuple, &fam, &DetectionOptions::default()).unwrap();
        let direct = earliest_light_observation_set(&m, q, &fam, &ShootOptions::default());
        assert!(set.earliest.unwrap().sup_diff(&direct) <= 1e-6);
    }

    #[test]
    fn sample_lies_on_cone() {
        let m = Metric::Minkowski;
        let q = [-0.15, 0.05, -0.1, 0.08];
        let tuple = tuple_through(q, [0.0, -0.6, 0.8]);
        let o = DetectionOptions::default();
        let set = detection_set(&m, &tuple, &family(), &o).unwrap();
        assert!(set.sample.len() > 50);
        for y in set.sample.iter().step_by(7) {
            assert!(set.contains(&m, *y));
            assert!(condition_i(&m, *y, &tuple, &o).unwrap().is_some());
        }
    }

    #[test]
    fn parallel_rays_give_empty_set() {
        let m = Metric::Minkowski;
        let xi = [1.0, 1.0, 0.0, 0.0];
        let tuple = [
            Ray { x: [-0.5, 0.0, 0.0, 0.0], xi },
            Ray { x: [-0.5, 0.0, 0.1, 0.0], xi },
            Ray { x: [-0.5, 0.0, 0.0, 0.1], xi },
            Ray { x: [-0.5, 0.0, 0.1, 0.1], xi },
        ];
        let set = detection_set(&m, &tuple, &family(), &DetectionOptions::default()).unwrap();
        assert!(set.is_empty() && set.earliest.is_none() && set.sample.is_empty());
    }

    #[test]
    fn causally_related_starts_are_inadmissible() {
        let m = Metric::Minkowski;
        let q = [-0.15, 0.05, -0.1, 0.08];
        let mut tuple = tuple_through(q, [0.0, -0.6, 0.8]);
        tuple[1].x = [tuple[0].x[0] + 0.2, tuple[0].x[1], tuple[0].x[2], tuple[0].x[3]];
        let err = detection_set(&m, &tuple, &family(), &DetectionOptions::default()).unwrap_err();
        assert!(matches!(err, ReconstructionError::Inadmissible { clause, .. } if clause.starts_with("(i)")));
    }

    #[test]
    fn distant_rays_are_inadmissible() {
        let m = Metric::Minkowski;
        let q = [-0.15, 0.05, -0.1, 0.08];
        let tuple = tuple_through(q, [0.0, -0.6, 0.8]);
        let o = DetectionOptions {
            theta1: 0.05,
            ..Default::default()
        };
        let err = detection_set(&m, &tuple, &family(), &o).unwrap_err();
        assert!(matches!(err, ReconstructionError::Inadmissible { clause, .. } if clause.starts_with("(ii)")));
    }

    #[test]
    fn vertical_offset_and_cone_distance_agree_in_flat_space() {
        let m = Metric::Minkowski;
        let q = [-0.2, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = sphere_points(1)[0];
            let r = rng.gen_range(0.1..0.3);
            let d = rng.gen_range(-0.01..0.01);
            let y = [q[0] + r + d, r * n[0], r * n[1], r * n[2]];
            let off = cone_offset(&m, q, y, &ShootOptions::default()).unwrap();
            assert!((off + d).abs() < 1e-10);
            let (_, res) = nearest_null_connection(&m, q, y, &FlowOptions::default()).unwrap();
            assert!((res - d.abs() / 2f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn tube_distance_of_ray_point_is_zero() {
        let m = Metric::Minkowski;
        let q = [-0.15, 0.05, -0.1, 0.08];
        let tuple = tuple_through(q, [0.0, -0.6, 0.8]);
        let d = messy_tube_distance(&m, &tuple, q, 3.0, &FlowOptions::default()).unwrap();
        assert!(d < 1e-8);
    }
}
