use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detection::{detection_set, unit_sphere, DetectionOptions};
use super::observation::{cut_observation_s, SOptions};
use super::{f_minus_or_inf, f_plus_or_inf, ReconstructionError, Scenario};
use crate::causal::{
    cut_locus, direction_tuples_for, Curve, earliest_light_observation_set, flow_to, geodesic_flow, null_vector,
    orthonormal_frame, CausalError, CutKind, CutOptions, FamilyConfig, FlowOptions, ObservationRecord,
    ObserverFamily, ShootOptions, TupleOptions,
};
use crate::geometry::MetricProvider;
use crate::linalg::dist4;

/// A reconstructed point: the nominal target on the sampling geodesic and
/// the record produced by the simulated measurement, whose `q` is the
/// recovered generating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub stage: usize,
    pub sample: usize,
    pub target: [f64; 4],
    pub record: ObservationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    pub failed: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub family: FamilyConfig,
    pub observers: usize,
    pub stages: Vec<Stage>,
    pub points: Vec<CloudPoint>,
}

#[derive(Serialize)]
struct JsonPoint<'a> {
    q: &'a [f64; 4],
    record: std::collections::BTreeMap<usize, f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// JSON array of `{q, record: {observer_id: value}}`.
    pub fn to_json(&self) -> String {
        let pts: Vec<JsonPoint> = self
            .points
            .iter()
            .map(|p| JsonPoint {
                q: &p.record.q,
                record: p.record.to_map(),
            })
            .collect();
        serde_json::to_string_pretty(&pts).expect("finite cloud serializes")
    }

    /// Plot data: stage, generating point and central observation.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,q0,q1,q2,q3,first_observation\n");
        for p in &self.points {
            let q = p.record.q;
            let _ = writeln!(s, "{},{},{},{},{},{}", p.stage, q[0], q[1], q[2], q[3], p.record.values[0]);
        }
        s
    }

    /// Largest distance from a target to the nearest generating point.
    pub fn coverage(&self, targets: &[[f64; 4]]) -> f64 {
        targets
            .iter()
            .map(|t| {
                self.points
                    .iter()
                    .map(|p| dist4(&p.record.q, t))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest record difference between two points with distinct
    /// generating points.
    pub fn min_separation(&self, distinct: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                if dist4(&a.record.q, &b.record.q) > distinct {
                    best = best.min(a.record.sup_diff(&b.record));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectOptions {
    pub t0: f64,
    /// Number of interior grid points on `(t₀, r₀)`, used when `step` is unset.
    pub grid: usize,
    pub step: Option<f64>,
    /// Stop once the central observation exceeds this value.
    pub max_value: Option<f64>,
    pub s: SOptions,
    pub tuple: TupleOptions,
    pub detection: DetectionOptions,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            t0: 0.0,
            grid: 10,
            step: None,
            max_value: None,
            s: SOptions::default(),
            tuple: TupleOptions::default(),
            detection: DetectionOptions {
                sample_dirs: 0,
                ..DetectionOptions::default()
            },
        }
    }
}

/// Earliest observation records of the points `γ_{y,ζ}(t)`, `t ∈ (t₀, r₀)`,
/// each obtained from the detection set of a tuple meeting at that point.
pub fn collect_earliest_sets<M: MetricProvider>(
    m: &M,
    y: [f64; 4],
    zeta: [f64; 4],
    s1: f64,
    family: &ObserverFamily,
    opts: &CollectOptions,
) -> Result<Vec<CloudPoint>, ReconstructionError> {
    let s = cut_observation_s(m, y, zeta, s1, family, &opts.s)?;
    let r0 = s.r0.unwrap_or(opts.s.r_max);
    if r0 <= opts.t0 {
        return Ok(Vec::new());
    }
    let n = match opts.step {
        Some(h) => ((r0 - opts.t0) / h).floor().max(0.0) as usize,
        None => opts.grid,
    };
    let path = geodesic_flow(m, y, zeta, r0, &opts.s.flow)?;
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let t = opts.t0 + (r0 - opts.t0) * i as f64 / (n + 1) as f64;
        let target = path.point(t);
        let tuples = direction_tuples_for(m, target, y, &opts.tuple)?;
        let set = detection_set(m, &tuples[0], family, &opts.detection)?;
        let record = set.earliest.ok_or_else(|| {
            CausalError::Tuple(format!("tuple through γ({t}) produced no detection"))
        })?;
        if opts.max_value.is_some_and(|v| record.values[0] > v) {
            break;
        }
        out.push(CloudPoint {
            stage: 0,
            sample: i - 1,
            target,
            record,
        });
    }
    Ok(out)
}

/// Decreasing observation levels `s₀ > s₁ > … > s_K = s_end`.
pub fn stage_grid(s0: f64, s_end: f64, step: f64) -> Vec<f64> {
    let k = ((s0 - s_end) / step).ceil().max(1.0) as usize;
    (0..=k).map(|j| s0 - (s0 - s_end) * j as f64 / k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiamondOptions {
    /// Target density `δ` of the point cloud.
    pub delta: f64,
    /// Observation levels, decreasing to `s₋`.
    pub levels: Vec<f64>,
    /// Chart offset of the geodesic starts from the observer.
    pub offset: f64,
    pub collect: CollectOptions,
    /// Direct observations seeding the top window `[s₀, s₊]`.
    pub seed_points: usize,
}

impl DiamondOptions {
    pub fn for_scenario(sc: &Scenario, delta: f64) -> Self {
        let s0 = sc.s_plus - delta;
        DiamondOptions {
            delta,
            levels: stage_grid(s0, sc.s_minus, 0.15),
            offset: 0.01,
            collect: CollectOptions {
                t0: sc.t0,
                s: SOptions {
                    r_max: 1.0,
                    grid: 40,
                    ..SOptions::for_scenario(sc)
                },
                max_value: Some(sc.s_plus),
                detection: DetectionOptions {
                    sample_dirs: 0,
                    eps: sc.eps,
                    t0: sc.t0,
                    ..DetectionOptions::default()
                },
                ..CollectOptions::default()
            },
            seed_points: 8,
        }
    }
}

struct Sample {
    y: [f64; 4],
    zeta: [f64; 4],
    s1: f64,
    step: f64,
}

fn perpendicular(n: &[f64; 3]) -> [f64; 3] {
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d: f64 = (0..3).map(|i| seed[i] * n[i]).sum();
    let u = [seed[0] - d * n[0], seed[1] - d * n[1], seed[2] - d * n[2]];
    let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.map(|c| c / r)
}

/// Point cloud over the diamond `I(μ̂(s₋), μ̂(s₊))`, built window by window
/// from geodesics leaving the neighbourhood of the central observer.
pub fn reconstruct_diamond<M: MetricProvider>(
    m: &M,
    scenario: &Scenario,
    family: &ObserverFamily,
    opts: &DiamondOptions,
) -> Result<PointCloud, ReconstructionError> {
    scenario.validate()?;
    let levels = &opts.levels;
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ReconstructionError::Scenario("levels must decrease".into()));
    }
    if (levels[levels.len() - 1] - scenario.s_minus).abs() > 1e-12 {
        return Err(ReconstructionError::Scenario("levels must end at s-".into()));
    }
    if let Some(k) = &scenario.kappa {
        if let Some(w) = levels.windows(2).find(|w| w[0] - w[1] >= k.kappa2) {
            return Err(ReconstructionError::Scenario(format!(
                "window [{}, {}] is wider than kappa2 = {}",
                w[1], w[0], k.kappa2
            )));
        }
    }
    let mu = family.central();
    let shoot = opts.collect.s.shoot;
    let delta = opts.delta;
    let mut points = Vec::new();
    let mut stages = Vec::new();

    // Seed: near-observer points of J⁺(μ̂(s₀)) ∩ J⁻(p⁺), observed directly.
    let s0 = levels[0];
    let top = scenario.s_plus - s0;
    if top > 0.0 && opts.seed_points > 0 {
        let dirs = unit_sphere(opts.seed_points);
        let mut k = 0;
        for j in 0..=((top / delta).ceil() as usize) {
            let s = (s0 + j as f64 * delta).min(scenario.s_plus);
            let base = mu.point(s);
            let reach = 0.5 * (scenario.s_plus - s);
            for n in &dirs {
                let t = 0.5 * reach;
                let target = [base[0] + t, base[1] + t * n[0], base[2] + t * n[1], base[3] + t * n[2]];
                let record = earliest_light_observation_set(m, target, family, &shoot);
                if record.values[0] <= scenario.s_plus {
                    points.push(CloudPoint {
                        stage: 0,
                        sample: k,
                        target,
                        record,
                    });
                    k += 1;
                }
            }
        }
        stages.push(Stage {
            index: 0,
            lo: s0,
            hi: scenario.s_plus,
            samples: k,
            failed: 0,
            records: points.len(),
        });
    }

    for (j, w) in levels.windows(2).enumerate() {
        let (hi, lo) = (w[0], w[1]);
        let index = j + 1;
        let mut samples = Vec::new();
        let ns = ((hi - lo) / delta).ceil().max(1.0) as usize;
        for i in 0..ns {
            let s = lo + (hi - lo) * i as f64 / ns as f64;
            let reach = 0.5 * (scenario.s_plus - s);
            let count = ((1.6 * reach / (0.6 * delta)).powi(2)).ceil().max(6.0) as usize;
            let base = mu.point(s);
            for n in unit_sphere(count) {
                let e = perpendicular(&n);
                let y = [
                    base[0],
                    base[1] + opts.offset * e[0],
                    base[2] + opts.offset * e[1],
                    base[3] + opts.offset * e[2],
                ];
                let frame = orthonormal_frame(m, y)?;
                samples.push(Sample {
                    y,
                    zeta: null_vector(&frame, n),
                    s1: hi,
                    step: 0.7 * delta,
                });
            }
        }
        let results: Vec<Result<Vec<CloudPoint>, ReconstructionError>> = samples
            .par_iter()
            .map(|smp| {
                let o = CollectOptions {
                    step: Some(smp.step),
                    ..opts.collect
                };
                collect_earliest_sets(m, smp.y, smp.zeta, smp.s1, family, &o)
            })
            .collect();
        let mut failed = 0;
        let before = points.len();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(pts) => points.extend(pts.into_iter().map(|p| CloudPoint {
                    stage: index,
                    sample: k,
                    ..p
                })),
                Err(_) => failed += 1,
            }
        }
        if failed == samples.len() {
            return Err(ReconstructionError::StageStarvation {
                stage: index,
                lo,
                hi,
                tried: samples.len(),
                failed,
            });
        }
        stages.push(Stage {
            index,
            lo,
            hi,
            samples: samples.len(),
            failed,
            records: points.len() - before,
        });
    }
    Ok(PointCloud {
        family: family.config.clone(),
        observers: family.len(),
        stages,
        points,
    })
}

/// Records observed directly at the nominal targets of a cloud.
pub fn ground_truth<M: MetricProvider>(
    m: &M,
    cloud: &PointCloud,
    family: &ObserverFamily,
    shoot: &ShootOptions,
) -> PointCloud {
    let points = cloud
        .points
        .par_iter()
        .map(|p| CloudPoint {
            record: earliest_light_observation_set(m, p.target, family, shoot),
            ..p.clone()
        })
        .collect();
    PointCloud {
        points,
        ..cloud.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Matching {
    /// Pair points by position in the cloud.
    Index,
    /// Pair each point of the first cloud with the nearest generating point
    /// of the second.
    Nearest,
}

/// Largest observation-record difference over matched pairs.
pub fn conformal_consistency(a: &PointCloud, b: &PointCloud, matching: Matching) -> Result<f64, ReconstructionError> {
    if a.family != b.family || a.observers != b.observers {
        return Err(ReconstructionError::Incomparable("observer grids differ".into()));
    }
    match matching {
        Matching::Index => {
            if a.len() != b.len() {
                return Err(ReconstructionError::Incomparable(format!(
                    "{} and {} points cannot be paired by index",
                    a.len(),
                    b.len()
                )));
            }
            Ok(a.points
                .iter()
                .zip(&b.points)
                .map(|(p, q)| p.record.sup_diff(&q.record))
                .fold(0.0, f64::max))
        }
        Matching::Nearest => {
            if b.is_empty() {
                return Err(ReconstructionError::Incomparable("second cloud is empty".into()));
            }
            Ok(a.points
                .iter()
                .map(|p| {
                    let q = b
                        .points
                        .iter()
                        .min_by(|x, y| {
                            dist4(&x.record.q, &p.record.q).total_cmp(&dist4(&y.record.q, &p.record.q))
                        })
                        .expect("non-empty");
                    p.record.sup_diff(&q.record)
                })
                .fold(0.0, f64::max))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa1: f64,
    pub kappa2: f64,
    pub theta1: f64,
    /// Smallest sampled cut parameter.
    pub min_rho: f64,
    /// Smallest sampled `f⁻` gap at cut points, when any cut point was found.
    pub min_gap: Option<f64>,
    /// Cut points whose latest past light ray could not be told apart from
    /// the generating ray; they are left out of `min_gap`.
    pub unresolved: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub s_minus: f64,
    pub s_plus: f64,
    pub s_plus2: f64,
    pub s_samples: usize,
    pub directions: usize,
    pub theta1: f64,
    pub cut: CutOptions,
    pub flow: FlowOptions,
    pub shoot: ShootOptions,
    /// Extra shooting directions when locating the latest past light ray
    /// from a cut point, where several rays reach the observer.
    pub starts: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            s_minus: -0.3,
            s_plus: 0.3,
            s_plus2: 0.6,
            s_samples: 3,
            directions: 8,
            theta1: 0.05,
            cut: CutOptions {
                s_max: 2.0,
                ..CutOptions::default()
            },
            flow: FlowOptions::default(),
            shoot: ShootOptions::default(),
            starts: 16,
        }
    }
}

const GAP_FLOOR: f64 = 1e-9;

/// Sampled estimates of `κ₁` (a tenth of the shortest cut parameter of the
/// observer's light rays) and `κ₂` (a quarter of the smallest `f⁻` gap
/// between an observer point and the first cut point of its light ray
/// restarted at parameter `t₀`). `t₀` is clamped to `[κ₁, 4κ₁]`. Without cut
/// points `κ₂` is the full window `s₊ - s₋`.
pub fn calibrate_kappa<M: MetricProvider>(
    m: &M,
    family: &ObserverFamily,
    t0: f64,
    opts: &CalibrationOptions,
) -> Result<KappaEstimate, ReconstructionError> {
    let mu = family.central();
    let ns = opts.s_samples.max(1);
    let dirs = unit_sphere(opts.directions.max(1));
    let mut jobs = Vec::new();
    for i in 0..ns {
        let s = if ns == 1 {
            opts.s_minus
        } else {
            opts.s_minus + (opts.s_plus - opts.s_minus) * i as f64 / (ns - 1) as f64
        };
        for n in &dirs {
            jobs.push((s, *n));
        }
    }
    let start = |s: f64, n: &[f64; 3]| -> Result<([f64; 4], [f64; 4]), ReconstructionError> {
        let xh = mu.point(s);
        let frame = orthonormal_frame(m, xh)?;
        Ok((xh, null_vector(&frame, *n)))
    };
    let rhos: Vec<Result<f64, ReconstructionError>> = jobs
        .par_iter()
        .map(|(s, n)| {
            let (x, xi) = start(*s, n)?;
            Ok(cut_locus(m, x, xi, &opts.cut)?.rho)
        })
        .collect();
    let mut min_rho = f64::INFINITY;
    for r in rhos {
        min_rho = min_rho.min(r?);
    }
    let kappa1 = 0.1 * min_rho;
    let t0 = t0.clamp(kappa1, 4.0 * kappa1);
    let gaps: Vec<Result<Option<f64>, ReconstructionError>> = jobs
        .par_iter()
        .map(|(s, n)| {
            let (xh, zeta) = start(*s, n)?;
            let (x, xi) = flow_to(m, xh, zeta, t0, &opts.flow)?;
            let c = cut_locus(m, x, xi, &opts.cut)?;
            if c.kind == CutKind::Horizon {
                return Ok(None);
            }
            let p = flow_to(m, x, xi, c.rho, &opts.flow)?.0;
            let latest = ShootOptions {
                extra_starts: opts.starts,
                ..opts.shoot
            };
            Ok((f_plus_or_inf(m, mu, p, &opts.shoot) <= opts.s_plus2)
                .then(|| f_minus_or_inf(m, mu, p, &latest) - s))
        })
        .collect();
    let mut min_gap: Option<f64> = None;
    let mut unresolved = 0;
    for g in gaps {
        match g? {
            Some(g) if g <= GAP_FLOOR => unresolved += 1,
            Some(g) => min_gap = Some(min_gap.map_or(g, |v| v.min(g))),
            None => {}
        }
    }
    let kappa2 = match min_gap {
        Some(g) => 0.25 * g,
        None => opts.s_plus - opts.s_minus,
    };
    Ok(KappaEstimate {
        kappa1,
        kappa2,
        theta1: opts.theta1,
        min_rho,
        min_gap,
        unresolved,
        samples: jobs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    fn family() -> ObserverFamily {
        ObserverFamily::new(&Metric::Minkowski, FamilyConfig::default()).unwrap()
    }

    fn toy_cloud() -> PointCloud {
        let m = Metric::Minkowski;
        let fam = family();
        let points = [[-0.1, 0.05, 0.0, 0.0], [0.0, 0.0, 0.1, 0.0], [0.05, 0.0, 0.0, -0.1]]
            .iter()
            .enumerate()
            .map(|(k, q)| CloudPoint {
                stage: 1,
                sample: k,
                target: *q,
                record: earliest_light_observation_set(&m, *q, &fam, &ShootOptions::default()),
            })
            .collect();
        PointCloud {
            family: fam.config.clone(),
            observers: fam.len(),
            stages: Vec::new(),
            points,
        }
    }

    #[test]
    fn stage_grid_is_decreasing_and_ends_at_s_minus() {
        let g = stage_grid(0.25, -0.3, 0.15);
        assert!((g[0] - 0.25).abs() < 1e-15 && (g[g.len() - 1] + 0.3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] - w[1] <= 0.15 + 1e-12 && w[1] < w[0]));
    }

    #[test]
    fn records_along_geodesic_match_direct_observation() {
        let m = Metric::Minkowski;
        let fam = family();
        let y = [-0.5, 0.3, 0.1, 0.0];
        let zeta = [1.0, -0.6, 0.8, 0.0];
        let o = CollectOptions {
            grid: 6,
            ..Default::default()
        };
        let pts = collect_earliest_sets(&m, y, zeta, -0.1, &fam, &o).unwrap();
        assert_eq!(pts.len(), 6);
        let r0 = cut_observation_s(&m, y, zeta, -0.1, &fam, &o.s).unwrap().r0.unwrap();
        for p in &pts {
            let direct = earliest_light_observation_set(&m, p.target, &fam, &ShootOptions::default());
            assert!(p.record.sup_diff(&direct) <= 1e-5);
            assert!(p.target[0] - y[0] < r0);
        }
        for w in pts.windows(2) {
            let dt = dist4(&w[0].target, &w[1].target);
            assert!(w[0].record.sup_diff(&w[1].record) <= 2.0 * dt + 1e-9);
        }
    }

    #[test]
    fn consistency_of_cloud_with_itself_is_zero() {
        let c = toy_cloud();
        assert_eq!(conformal_consistency(&c, &c, Matching::Index).unwrap(), 0.0);
        assert_eq!(conformal_consistency(&c, &c, Matching::Nearest).unwrap(), 0.0);
    }

    #[test]
    fn time_shift_is_measured_exactly() {
        let c = toy_cloud();
        let mut shifted = c.clone();
        for p in &mut shifted.points {
            for v in &mut p.record.values {
                *v += 0.0125;
            }
        }
        let s = conformal_consistency(&c, &shifted, Matching::Index).unwrap();
        assert!((s - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn different_observer_grids_are_incomparable() {
        let c = toy_cloud();
        let mut d = c.clone();
        d.family.grid = 5;
        assert!(conformal_consistency(&c, &d, Matching::Index).is_err());
    }

    #[test]
    fn minkowski_kappa2_is_the_full_window() {
        let k = calibrate_kappa(&Metric::Minkowski, &family(), 0.0, &CalibrationOptions::default()).unwrap();
        assert!(k.min_gap.is_none());
        assert_eq!(k.kappa2, 0.6);
        assert!(k.kappa1 <= k.min_rho / 5.0);
    }

    #[test]
    fn cloud_outputs_are_deterministic() {
        let c = toy_cloud();
        assert_eq!(c.to_json(), c.clone().to_json());
        let csv = c.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("stage,q0,q1,q2,q3,first_observation"));
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert!(v[0]["record"]["0"].is_number());
    }
}
