use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geodesic::{geodesic_flow, FlowOptions, GeodesicPath};
use super::CausalError;
use crate::geometry::MetricProvider;
use crate::linalg::quad;

/// A smooth parametrized curve in the chart.
pub trait Curve: Sync {
    fn point(&self, s: f64) -> [f64; 4];
    fn velocity(&self, s: f64) -> [f64; 4];
}

/// The coordinate time line through `base`, parametrized by `t - base.t`.
#[derive(Debug, Clone, Copy)]
pub struct VerticalLine {
    pub base: [f64; 4],
}

impl Curve for VerticalLine {
    fn point(&self, s: f64) -> [f64; 4] {
        let mut p = self.base;
        p[0] += s;
        p
    }

    fn velocity(&self, _s: f64) -> [f64; 4] {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// A freely falling observer `μ_{z,η}(s) = exp_z(s η)` with `g(η,η) = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub z: [f64; 4],
    pub eta: [f64; 4],
    back: GeodesicPath,
    fwd: GeodesicPath,
}

/// Parameter margin sampled beyond the nominal span `[-1, 1]`.
const OBSERVER_REACH: f64 = 3.0;

impl Observer {
    pub fn new<M: MetricProvider>(m: &M, z: [f64; 4], eta: [f64; 4]) -> Result<Self, CausalError> {
        let n = quad(&m.eval(z), &eta, &eta);
        if n >= 0.0 || eta[0] <= 0.0 {
            return Err(CausalError::NotTimelike { x: z });
        }
        let c = 1.0 / (-n).sqrt();
        let eta = [eta[0] * c, eta[1] * c, eta[2] * c, eta[3] * c];
        let opts = FlowOptions {
            h_max: 0.02,
            ..FlowOptions::default()
        };
        let fwd = geodesic_flow(m, z, eta, OBSERVER_REACH, &opts)?;
        let back = geodesic_flow(m, z, eta, -OBSERVER_REACH, &opts)?;
        for st in fwd.states().iter().chain(back.states().iter()) {
            if st.norm(m) >= -1e-6 {
                return Err(CausalError::NotTimelike { x: st.x });
            }
        }
        Ok(Observer { z, eta, back, fwd })
    }

    pub fn at(&self, s: f64) -> ([f64; 4], [f64; 4]) {
        if s >= 0.0 {
            self.fwd.at(s)
        } else {
            self.back.at(s)
        }
    }
}

impl Curve for Observer {
    fn point(&self, s: f64) -> [f64; 4] {
        self.at(s).0
    }

    fn velocity(&self, s: f64) -> [f64; 4] {
        self.at(s).1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub z0: [f64; 4],
    pub eta0: [f64; 4],
    /// Radius of the sampled ball around `(z0, eta0)`.
    pub radius: f64,
    /// Grid points per spatial axis (odd).
    pub grid: usize,
    /// Number of velocity-tilted observers at `z0` (at most 6).
    pub tilts: usize,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            z0: [0.0; 4],
            eta0: [1.0, 0.0, 0.0, 0.0],
            radius: 0.1,
            grid: 3,
            tilts: 2,
        }
    }
}

/// Observers sampled on a fixed grid; index 0 is the central observer `μ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverFamily {
    pub config: FamilyConfig,
    pub observers: Vec<Observer>,
}

impl ObserverFamily {
    pub fn new<M: MetricProvider>(m: &M, config: FamilyConfig) -> Result<Self, CausalError> {
        let mut observers = vec![Observer::new(m, config.z0, config.eta0)?];
        let g = config.grid.max(1);
        let half = (g / 2) as i64;
        let step = if half > 0 {
            config.radius / half as f64
        } else {
            0.0
        };
        for i in -half..=half {
            for j in -half..=half {
                for k in -half..=half {
                    if i == 0 && j == 0 && k == 0 {
                        continue;
                    }
                    let off = [i as f64 * step, j as f64 * step, k as f64 * step];
                    let r2: f64 = off.iter().map(|o| o * o).sum();
                    if r2 > config.radius * config.radius * (1.0 + 1e-12) {
                        continue;
                    }
                    let z = [
                        config.z0[0],
                        config.z0[1] + off[0],
                        config.z0[2] + off[1],
                        config.z0[3] + off[2],
                    ];
                    observers.push(Observer::new(m, z, config.eta0)?);
                }
            }
        }
        let dirs = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        for d in dirs.iter().take(config.tilts.min(6)) {
            let mut eta = config.eta0;
            for a in 0..3 {
                eta[a + 1] += config.radius * d[a];
            }
            observers.push(Observer::new(m, config.z0, eta)?);
        }
        Ok(ObserverFamily { config, observers })
    }

    pub fn central(&self) -> &Observer {
        &self.observers[0]
    }

    pub fn len(&self) -> usize {
        self.observers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observers.is_empty()
    }
}

/// Earliest observation parameters of a source point, one per observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub q: [f64; 4],
    pub values: Vec<f64>,
}

impl ObservationRecord {
    /// Largest per-observer difference.
    pub fn sup_diff(&self, other: &ObservationRecord) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Observer index to value, as written to JSON.
    pub fn to_map(&self) -> BTreeMap<usize, f64> {
        self.values.iter().cloned().enumerate().collect()
    }
}
