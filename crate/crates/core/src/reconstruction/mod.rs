//! Recovery of spacetime points from earliest light observations.
//!
//! Singularity detection is simulated geometrically: a tuple of four null
//! rays produces a detection set exactly when the rays meet before their cut
//! points, and the detected set is the future light cone of the meeting
//! point. No wave equation is solved anywhere in this module.

mod detection;
mod diamond;
mod observation;

pub use detection::{
    check_admissible, condition_i, cone_offset, detection_set, in_causal_future, messy_tube_distance,
    ConditionI, DetectionOptions, DetectionSet, Region,
};
pub use diamond::{
    calibrate_kappa, collect_earliest_sets, conformal_consistency, ground_truth, reconstruct_diamond,
    stage_grid, CalibrationOptions, CloudPoint, CollectOptions, DiamondOptions, KappaEstimate, Matching,
    PointCloud, Stage,
};
pub use observation::{
    avoids_observer, cut_observation_s, genuine_observation_t, SOptions, SValue, TOptions, TValue,
};

use serde::{Deserialize, Serialize};

use crate::causal::{
    f_minus_raw, f_plus_raw, CausalError, FamilyConfig, Observer, ObserverFamily, ShootOptions,
};
use crate::geometry::{Metric, MetricProvider};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReconstructionError {
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("tuple violates admissibility clause ({clause}): {detail}")]
    Inadmissible { clause: &'static str, detail: String },
    #[error("geodesic from {y:?} meets the central observer")]
    MeetsObserver { y: [f64; 4] },
    #[error("stage {stage} on window [{lo}, {hi}] produced no admissible samples ({tried} tried, {failed} failed)")]
    StageStarvation {
        stage: usize,
        lo: f64,
        hi: f64,
        tried: usize,
        failed: usize,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("clouds are not comparable: {0}")]
    Incomparable(String),
}

/// Observation windows and tolerances of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub metric: Metric,
    pub family: FamilyConfig,
    /// Diamond endpoints `p∓ = μ̂(s∓)`.
    pub s_minus: f64,
    pub s_plus: f64,
    /// Exit level `s₊₂ > s₊` bounding the geodesics that are followed.
    pub s_plus2: f64,
    pub t0: f64,
    /// Hit tolerance `ε` of the detection tests.
    pub eps: f64,
    pub kappa: Option<KappaEstimate>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(metric: Metric) -> Self {
        Scenario {
            metric,
            family: FamilyConfig::default(),
            s_minus: -0.3,
            s_plus: 0.3,
            s_plus2: 0.6,
            t0: 0.0,
            eps: 1e-3,
            kappa: None,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ReconstructionError> {
        let bad = |s: String| Err(ReconstructionError::Scenario(s));
        if !(-1.0..=1.0).contains(&self.s_minus) || !(-1.0..=1.0).contains(&self.s_plus) {
            return bad(format!("window [{}, {}] leaves the observer span [-1, 1]", self.s_minus, self.s_plus));
        }
        if self.s_minus >= self.s_plus {
            return bad(format!("p- = mu({}) does not precede p+ = mu({})", self.s_minus, self.s_plus));
        }
        if self.s_plus2 <= self.s_plus {
            return bad(format!("exit level {} must exceed s+ = {}", self.s_plus2, self.s_plus));
        }
        if !(self.eps > 0.0) {
            return bad(format!("hit tolerance {} must be positive", self.eps));
        }
        if self.t0 < 0.0 {
            return bad(format!("t0 = {} is negative", self.t0));
        }
        if let Some(k) = &self.kappa {
            if self.t0 > 4.0 * k.kappa1 {
                return bad(format!("t0 = {} exceeds the calibrated range 4 kappa1 = {}", self.t0, 4.0 * k.kappa1));
            }
        }
        Ok(())
    }

    pub fn observers<M: MetricProvider>(&self, m: &M) -> Result<ObserverFamily, ReconstructionError> {
        Ok(ObserverFamily::new(m, self.family.clone())?)
    }
}

/// `f⁺` of the central observer without the span clamp; `+∞` when light
/// from `x` never reaches it within the search window.
pub(crate) fn f_plus_or_inf<M: MetricProvider>(m: &M, mu: &Observer, x: [f64; 4], shoot: &ShootOptions) -> f64 {
    f_plus_raw(m, mu, x, shoot).unwrap_or(f64::INFINITY)
}

/// `f⁻` of the central observer; `-∞` when no past light ray from `x` meets it.
pub(crate) fn f_minus_or_inf<M: MetricProvider>(m: &M, mu: &Observer, x: [f64; 4], shoot: &ShootOptions) -> f64 {
    f_minus_raw(m, mu, x, shoot).unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        Scenario::new(Metric::Minkowski).validate().unwrap();
    }

    #[test]
    fn reversed_window_is_rejected() {
        let mut s = Scenario::new(Metric::Minkowski);
        s.s_minus = 0.4;
        assert!(matches!(s.validate(), Err(ReconstructionError::Scenario(_))));
    }

    #[test]
    fn t0_outside_calibrated_range_is_rejected() {
        let mut s = Scenario::new(Metric::Minkowski);
        s.kappa = Some(KappaEstimate {
            kappa1: 0.01,
            kappa2: 0.1,
            theta1: 0.05,
            min_rho: 0.1,
            min_gap: None,
            unresolved: 0,
            samples: 1,
        });
        s.t0 = 0.1;
        assert!(s.validate().is_err());
    }
}
