use serde::{Deserialize, Serialize};

use super::detection::{detection_set, DetectionOptions};
use super::{f_minus_or_inf, f_plus_or_inf, ReconstructionError, Scenario};
use crate::causal::{
    direction_tuples_for, geodesic_flow, Curve, FlowOptions, GeodesicPath, Observer, ObserverFamily,
    ShootOptions, TupleOptions,
};
use crate::geometry::MetricProvider;
use crate::linalg::{dist4, sub4};

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closest distance between the segments `[p0, p1]` and `[q0, q1]`.
fn segment_segment(p0: &[f64; 4], p1: &[f64; 4], q0: &[f64; 4], q1: &[f64; 4]) -> f64 {
    let u = sub4(p1, p0);
    let v = sub4(q1, q0);
    let w = sub4(p0, q0);
    let (a, b, c, d, e) = (dot(&u, &u), dot(&u, &v), dot(&v, &v), dot(&u, &w), dot(&v, &w));
    let den = a * c - b * b;
    let (mut sn, mut sd, mut tn, mut td);
    if den < 1e-14 * a.max(1e-300) * c.max(1e-300) {
        sn = 0.0;
        sd = 1.0;
        tn = e;
        td = c;
    } else {
        sd = den;
        td = den;
        sn = b * e - c * d;
        tn = a * e - b * d;
        if sn < 0.0 {
            sn = 0.0;
            tn = e;
            td = c;
        } else if sn > sd {
            sn = sd;
            tn = e + b;
            td = c;
        }
    }
    if tn < 0.0 {
        tn = 0.0;
        sn = (-d).clamp(0.0, a);
        sd = a;
    } else if tn > td {
        tn = td;
        sn = (b - d).clamp(0.0, a);
        sd = a;
    }
    let s = if sd.abs() > 0.0 { sn / sd } else { 0.0 };
    let t = if td.abs() > 0.0 { tn / td } else { 0.0 };
    let p = [0, 1, 2, 3].map(|k| p0[k] + s * u[k]);
    let q = [0, 1, 2, 3].map(|k| q0[k] + t * v[k]);
    dist4(&p, &q)
}

/// Whether `γ_{y,ζ}((0, r_max])` stays farther than `tol` from the observer.
pub fn avoids_observer<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    zeta: [f64; 4],
    mu: &Observer,
    r_max: f64,
    tol: f64,
    flow: &FlowOptions,
) -> Result<bool, ReconstructionError> {
    let path = geodesic_flow(m, y, zeta, r_max, flow)?;
    Ok(clearance(&path, mu, r_max) > tol)
}

fn clearance(path: &GeodesicPath, mu: &Observer, r_max: f64) -> f64 {
    let n = 300;
    let gam: Vec<[f64; 4]> = (0..=n).map(|i| path.point(r_max * i as f64 / n as f64)).collect();
    let obs: Vec<[f64; 4]> = (0..=600).map(|i| mu.point(-3.0 + 0.01 * i as f64)).collect();
    let mut best = f64::INFINITY;
    for g in gam.windows(2) {
        let lo = g[0][0].min(g[1][0]);
        let hi = g[0][0].max(g[1][0]);
        for o in obs.windows(2) {
            if o[1][0] < lo - 0.5 || o[0][0] > hi + 0.5 {
                continue;
            }
            best = best.min(segment_segment(&g[0], &g[1], &o[0], &o[1]));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SOptions {
    pub s_plus: f64,
    pub s_plus2: f64,
    /// Largest geodesic parameter scanned.
    pub r_max: f64,
    pub grid: usize,
    pub tol: f64,
    /// Minimal chart distance between the geodesic and the observer.
    pub clearance: f64,
    pub shoot: ShootOptions,
    pub flow: FlowOptions,
}

impl Default for SOptions {
    fn default() -> Self {
        SOptions {
            s_plus: 0.3,
            s_plus2: 0.6,
            r_max: 2.0,
            grid: 80,
            tol: 1e-12,
            clearance: 1e-6,
            shoot: ShootOptions::default(),
            flow: FlowOptions::default(),
        }
    }
}

impl SOptions {
    pub fn for_scenario(sc: &Scenario) -> Self {
        SOptions {
            s_plus: sc.s_plus,
            s_plus2: sc.s_plus2,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SValue {
    pub value: f64,
    /// Entry parameter into `J⁺(μ̂(s₁))`.
    pub r1: Option<f64>,
    /// Exit parameter from `I⁻(μ̂(s₊₂))`.
    pub r2: Option<f64>,
    pub r0: Option<f64>,
    /// `γ(r₀)` when the geodesic meets `J⁺(μ̂(s₁)) ∩ J⁻(p⁺)`.
    pub q0: Option<[f64; 4]>,
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, pred: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `𝕊(y, ζ, s₁)`: the first observation time on the central observer of the
/// point where `γ_{y,ζ}` enters `J⁺(μ̂(s₁))`, or `s₊` when that happens only
/// after the geodesic has left `J⁻(p⁺)`.
pub fn cut_observation_s<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    zeta: [f64; 4],
    s1: f64,
    family: &ObserverFamily,
    opts: &SOptions,
) -> Result<SValue, ReconstructionError> {
    let mu = family.central();
    let path = geodesic_flow(m, y, zeta, opts.r_max, &opts.flow)?;
    if clearance(&path, mu, opts.r_max) <= opts.clearance {
        return Err(ReconstructionError::MeetsObserver { y });
    }
    let entered = |r: f64| f_minus_or_inf(m, mu, path.point(r), &opts.shoot) >= s1;
    let exited = |r: f64| f_plus_or_inf(m, mu, path.point(r), &opts.shoot) >= opts.s_plus2;
    let (mut r1, mut r2) = (entered(0.0).then_some(0.0), exited(0.0).then_some(0.0));
    let dr = opts.r_max / opts.grid as f64;
    let mut prev = 0.0;
    for i in 1..=opts.grid {
        if r1.is_some() || r2.is_some() {
            break;
        }
        let r = i as f64 * dr;
        if entered(r) {
            r1 = Some(bisect(prev, r, opts.tol, entered));
        }
        if exited(r) {
            r2 = Some(bisect(prev, r, opts.tol, exited));
        }
        prev = r;
    }
    let r0 = match (r1, r2) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let meets = r1.and_then(|r| {
        let p = path.point(r);
        (f_plus_or_inf(m, mu, p, &opts.shoot) <= opts.s_plus + 1e-12).then_some(p)
    });
    let (value, q0) = match (meets, r0) {
        (Some(_), Some(r)) => {
            let p = path.point(r);
            (f_plus_or_inf(m, mu, p, &opts.shoot).min(opts.s_plus), Some(p))
        }
        _ => (opts.s_plus, None),
    };
    Ok(SValue { value, r1, r2, r0, q0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TOptions {
    pub s_plus: f64,
    /// Largest tuple radius `ϑ`; the levels are `ϑ, ϑ/2, ϑ/4, …`.
    pub theta: f64,
    pub levels: usize,
    pub r_max: f64,
    /// Coarse parameter grid along the geodesic.
    pub grid: usize,
    /// Resolution of the infimum in the observation parameter.
    pub step: f64,
    pub tuple: TupleOptions,
    pub detection: DetectionOptions,
    pub flow: FlowOptions,
    pub shoot: ShootOptions,
}

impl Default for TOptions {
    fn default() -> Self {
        TOptions {
            s_plus: 0.3,
            theta: 0.1,
            levels: 3,
            r_max: 2.0,
            grid: 12,
            step: 1e-3,
            tuple: TupleOptions::default(),
            detection: DetectionOptions {
                sample_dirs: 0,
                ..DetectionOptions::default()
            },
            flow: FlowOptions::default(),
            shoot: ShootOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TValue {
    /// Infimum at the finest `ϑ` level.
    pub value: f64,
    /// Infimum per level, coarsest first.
    pub levels: Vec<f64>,
    /// Width of the final bracket in the observation parameter.
    pub resolution: f64,
    pub evaluations: usize,
    pub failed: usize,
    pub warning: Option<String>,
}

struct Probe {
    genuine: bool,
    value: f64,
}

/// `T(y, ζ, s₁)`: infimum of the first central observation over genuine
/// detection sets along `γ_{y,ζ}`, sampled at several tuple radii.
#[allow(clippy::too_many_arguments)]
pub fn genuine_observation_t<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    zeta: [f64; 4],
    s1: f64,
    family: &ObserverFamily,
    opts: &TOptions,
) -> Result<TValue, ReconstructionError> {
    if s1 >= opts.s_plus {
        return Ok(TValue {
            value: opts.s_plus,
            levels: vec![opts.s_plus; opts.levels],
            resolution: 0.0,
            evaluations: 0,
            failed: 0,
            warning: None,
        });
    }
    let mu = family.central();
    let central = ObserverFamily {
        config: family.config.clone(),
        observers: vec![mu.clone()],
    };
    let path = geodesic_flow(m, y, zeta, opts.r_max, &opts.flow)?;
    let mut evaluations = 0;
    let mut failed = 0;
    let mut probe = |t: f64, theta: f64| -> Option<Probe> {
        evaluations += 1;
        let q = path.point(t);
        let tuple_opts = TupleOptions {
            radius: theta,
            ..opts.tuple
        };
        let set = direction_tuples_for(m, q, y, &tuple_opts)
            .ok()
            .and_then(|ts| detection_set(m, &ts[0], &central, &opts.detection).ok());
        let Some(set) = set else {
            failed += 1;
            return None;
        };
        let (Some(qr), Some(rec)) = (set.q, set.earliest) else {
            failed += 1;
            return None;
        };
        let value = rec.values[0];
        let genuine = value <= opts.s_plus && f_minus_or_inf(m, mu, qr, &opts.shoot) >= s1;
        Some(Probe { genuine, value })
    };
    let mut levels = Vec::with_capacity(opts.levels);
    let mut resolution = 0.0f64;
    let mut warnings = Vec::new();
    for l in 0..opts.levels.max(1) {
        let theta = opts.theta / (1u32 << l) as f64;
        let dt = opts.r_max / opts.grid as f64;
        let mut lo = (0.0, f64::NEG_INFINITY);
        let mut hi = None;
        for i in 1..=opts.grid {
            let t = i as f64 * dt;
            match probe(t, theta) {
                Some(p) if p.genuine => {
                    hi = Some((t, p.value));
                    break;
                }
                Some(p) if p.value > opts.s_plus => break,
                Some(p) => lo = (t, p.value),
                None => {}
            }
        }
        let Some(mut hi) = hi else {
            levels.push(opts.s_plus);
            continue;
        };
        for _ in 0..40 {
            if hi.1 - lo.1 <= 0.5 * opts.step {
                break;
            }
            let t = 0.5 * (lo.0 + hi.0);
            match probe(t, theta) {
                Some(p) if p.genuine => hi = (t, p.value),
                Some(p) => lo = (t, p.value),
                None => lo = (t, lo.1),
            }
            if hi.0 - lo.0 < 1e-12 {
                break;
            }
        }
        if lo.1.is_finite() {
            resolution = resolution.max(hi.1 - lo.1);
        } else {
            warnings.push(format!("level {l}: first grid point is already genuine"));
        }
        levels.push(hi.1.min(opts.s_plus));
    }
    let value = *levels.last().expect("at least one level");
    if levels.iter().any(|v| (v - value).abs() > opts.step) {
        warnings.push(format!("tuple radii disagree: {levels:?}"));
    }
    if evaluations > 0 && failed == evaluations {
        warnings.push(format!("no tuple could be sampled; partial infimum {value}"));
    }
    Ok(TValue {
        value,
        levels,
        resolution,
        evaluations,
        failed,
        warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::FamilyConfig;
    use crate::geometry::Metric;
    use crate::reconstruction::detection::unit_sphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn family() -> ObserverFamily {
        ObserverFamily::new(&Metric::Minkowski, FamilyConfig::default()).unwrap()
    }

    /// Entry parameter of `y + r(1, n)` into `{t - |x| ≥ s₁}`.
    fn flat_entry(y: [f64; 4], n: [f64; 3], s1: f64) -> Option<f64> {
        let x = [y[1], y[2], y[3]];
        let d2: f64 = x.iter().map(|v| v * v).sum();
        let delta = y[0] - s1;
        if delta >= d2.sqrt() {
            return Some(0.0);
        }
        let xn: f64 = (0..3).map(|i| x[i] * n[i]).sum();
        let r = (delta * delta - d2) / (2.0 * (xn - delta));
        (r > 0.0 && delta + r >= 0.0).then_some(r)
    }

    #[test]
    fn segment_distance_of_skew_lines() {
        let d = segment_segment(
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.5, -1.0, 0.3],
            &[0.0, 0.5, 1.0, 0.3],
        );
        assert!((d - 0.3).abs() < 1e-14);
    }

    #[test]
    fn flat_entry_parameter_matches_closed_form() {
        let fam = family();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut entered = 0;
        for _ in 0..30 {
            let y = [
                rng.gen_range(-0.6..-0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ];
            let n = unit_sphere(64)[rng.gen_range(0..64)];
            let s1 = rng.gen_range(-0.9..-0.3);
            let zeta = [1.0, n[0], n[1], n[2]];
            let Ok(s) = cut_observation_s(&Metric::Minkowski, y, zeta, s1, &fam, &SOptions::default()) else {
                continue;
            };
            match flat_entry(y, n, s1) {
                Some(want) if s.r2.is_some_and(|r2| r2 < want) => assert_eq!(s.value, 0.3),
                Some(want) if want < 2.0 => {
                    entered += 1;
                    assert!((s.r1.unwrap() - want).abs() < 1e-8, "{:?} {want}", s.r1);
                    let p = [0, 1, 2, 3].map(|k| y[k] + want * zeta[k]);
                    let fp = p[0] + (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
                    assert!((s.value - fp.min(0.3)).abs() < 1e-9);
                }
                _ => assert!(s.r1.is_none(), "{s:?}"),
            }
        }
        assert!(entered >= 10, "{entered}");
    }

    #[test]
    fn outward_geodesic_never_enters() {
        // Leaving the observer at light speed keeps f⁻ constant.
        let y = [-0.5, 0.1, 0.0, 0.0];
        let s = cut_observation_s(
            &Metric::Minkowski,
            y,
            [1.0, 1.0, 0.0, 0.0],
            -0.2,
            &family(),
            &SOptions::default(),
        )
        .unwrap();
        assert_eq!(s.value, 0.3);
        assert!(s.r1.is_none() && s.q0.is_none());
        assert!((s.r2.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn geodesic_through_observer_is_rejected() {
        let err = cut_observation_s(
            &Metric::Minkowski,
            [-0.5, 0.1, 0.0, 0.0],
            [1.0, -1.0, 0.0, 0.0],
            -0.2,
            &family(),
            &SOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReconstructionError::MeetsObserver { .. }));
    }

    #[test]
    fn t_matches_s_in_flat_space() {
        let fam = family();
        let y = [-0.5, 0.3, 0.1, 0.0];
        let zeta = [1.0, -0.6, 0.8, 0.0];
        let s = cut_observation_s(&Metric::Minkowski, y, zeta, -0.1, &fam, &SOptions::default()).unwrap();
        let t = genuine_observation_t(&Metric::Minkowski, y, zeta, -0.1, &fam, &TOptions::default()).unwrap();
        assert!((t.value - s.value).abs() <= 1e-3, "{t:?} {s:?}");
        assert!(t.warning.is_none(), "{t:?}");
    }

    #[test]
    fn degenerate_window_gives_s_plus() {
        let t = genuine_observation_t(
            &Metric::Minkowski,
            [-0.5, 0.3, 0.1, 0.0],
            [1.0, -0.6, 0.8, 0.0],
            0.3,
            &family(),
            &TOptions::default(),
        )
        .unwrap();
        assert_eq!(t.value, 0.3);
    }
}
