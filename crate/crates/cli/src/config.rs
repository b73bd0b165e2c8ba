//! Scenario files: TOML with fixed sections and no unknown keys.

use std::collections::BTreeMap;
use std::path::PathBuf;

use lorentzkit_core::causal::FamilyConfig;
use lorentzkit_core::interaction::Hierarchy;
use lorentzkit_core::Metric;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("metric catalog has no entry `{name}`: {reason}")]
    Catalog { name: String, reason: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Catalog name, e.g. `minkowski` or `lens(0.6, 0.5)`.
    pub metric: String,
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub observers: ObserverConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub causal: CausalConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub diff: DiffConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub z0: [f64; 4],
    pub eta0: [f64; 4],
    pub radius: f64,
    pub grid: usize,
    pub tilts: usize,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        let f = FamilyConfig::default();
        ObserverConfig {
            z0: f.z0,
            eta0: f.eta0,
            radius: f.radius,
            grid: f.grid,
            tilts: f.tilts,
        }
    }
}

impl ObserverConfig {
    pub fn family(&self) -> FamilyConfig {
        FamilyConfig {
            z0: self.z0,
            eta0: self.eta0,
            radius: self.radius,
            grid: self.grid,
            tilts: self.tilts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub points: usize,
    /// Half-width of the sampled diamond `|t| + |x| < radius`.
    pub radius: f64,
    /// Step of the central differences in the gauge-correction check.
    pub fd_step: f64,
    pub bianchi_tol: f64,
    pub gauge_tol: f64,
    pub correction_tol: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            points: 100,
            radius: 0.8,
            fd_step: 1e-3,
            bianchi_tol: 1e-7,
            gauge_tol: 1e-12,
            correction_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalConfig {
    pub rays: usize,
    pub steps: usize,
    pub s_max: f64,
    pub samples: usize,
    pub null_tol: f64,
    pub closed_form_tol: f64,
}

impl Default for CausalConfig {
    fn default() -> Self {
        CausalConfig {
            rays: 8,
            steps: 20,
            s_max: 1.0,
            samples: 20,
            null_tol: 1e-8,
            closed_form_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    /// Covector parameters of the oracle comparison.
    pub rho: [f64; 4],
    pub a: u32,
    pub hierarchy: Hierarchy,
    pub taus: Vec<f64>,
    /// `ρ₁` of the hierarchy used for the `κ` determinant.
    pub kappa_rho1: f64,
    pub slope_tol: f64,
    pub ratio_tol: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            rho: [0.3, 0.25, 0.2, 0.15],
            a: 6,
            hierarchy: Hierarchy::Limit,
            taus: vec![250.0, 500.0, 1000.0, 2000.0],
            kappa_rho1: 0.05,
            slope_tol: 0.05,
            ratio_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub frames: usize,
    pub fields: usize,
    /// Range of `‖(Q, R)‖` of the random inputs.
    pub input_min: f64,
    pub input_max: f64,
    /// Amplitude of the random shifts of the background fields.
    pub shift: f64,
    pub max_iterations: usize,
    pub residual_tol: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            frames: 100,
            fields: 5,
            input_min: 1e-5,
            input_max: 1e-3,
            shift: 0.2,
            max_iterations: 30,
            residual_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub s_minus: f64,
    pub s_plus: f64,
    pub s_plus2: f64,
    pub t0: f64,
    pub eps: f64,
    pub delta: f64,
    pub targets: usize,
    pub score_tol: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            s_minus: -0.3,
            s_plus: 0.3,
            s_plus2: 0.6,
            t0: 0.0,
            eps: 1e-3,
            delta: 0.1,
            targets: 100,
            score_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffConfig {
    pub default: f64,
    /// Per-field tolerances; a key matches every field it is a prefix of.
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            default: 0.0,
            tolerances: BTreeMap::new(),
        }
    }
}

impl DiffConfig {
    /// Tolerance of the longest matching prefix, else the default.
    pub fn tolerance(&self, field: &str) -> f64 {
        self.tolerances
            .iter()
            .filter(|(k, _)| field.starts_with(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map_or(self.default, |(_, v)| *v)
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable")
    }

    pub fn metric(&self) -> Result<Metric, ConfigError> {
        self.metric.parse().map_err(|e: lorentzkit_core::geometry::CatalogError| ConfigError::Catalog {
            name: self.metric.clone(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                reason,
            })
        };
        self.metric()?;
        let o = &self.observers;
        if o.grid == 0 || o.grid % 2 == 0 {
            return bad("observers.grid", format!("{} is not an odd positive count", o.grid));
        }
        if o.tilts > 6 {
            return bad("observers.tilts", format!("{} exceeds 6", o.tilts));
        }
        if !(o.radius > 0.0) {
            return bad("observers.radius", format!("{} is not positive", o.radius));
        }
        if !(o.eta0[0] > 0.0) {
            return bad("observers.eta0", "time component must be positive".into());
        }
        let g = &self.geometry;
        if !(g.fd_step > 0.0 && g.fd_step < 0.1) {
            return bad("geometry.fd_step", format!("{} is outside (0, 0.1)", g.fd_step));
        }
        if !(g.radius > 0.0 && g.radius <= 0.9) {
            return bad("geometry.radius", format!("{} is outside (0, 0.9]", g.radius));
        }
        let c = &self.causal;
        if c.rays == 0 || c.steps == 0 {
            return bad("causal", "rays and steps must be positive".into());
        }
        if !(c.s_max > 0.0) {
            return bad("causal.s_max", format!("{} is not positive", c.s_max));
        }
        let i = &self.interaction;
        if i.rho.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("interaction.rho", "entries must lie in (0, 1)".into());
        }
        if i.a < 2 {
            return bad("interaction.a", format!("{} is below 2", i.a));
        }
        if i.taus.len() < 2 || i.taus.iter().any(|t| !(*t > 0.0)) {
            return bad("interaction.taus", "need at least two positive values".into());
        }
        if !(i.kappa_rho1 > 0.0 && i.kappa_rho1 < 1.0) {
            return bad("interaction.kappa_rho1", format!("{} is outside (0, 1)", i.kappa_rho1));
        }
        let a = &self.adaptive;
        if a.fields == 0 {
            return bad("adaptive.fields", "must be positive".into());
        }
        if !(a.input_min > 0.0 && a.input_min <= a.input_max) {
            return bad("adaptive.input_min", "need 0 < input_min <= input_max".into());
        }
        let r = &self.reconstruction;
        if !(r.s_minus < r.s_plus && r.s_plus < r.s_plus2) {
            return bad("reconstruction", "need s_minus < s_plus < s_plus2".into());
        }
        if !(r.delta > 0.0) || !(r.eps > 0.0) {
            return bad("reconstruction", "delta and eps must be positive".into());
        }
        if !(self.diff.default >= 0.0) || self.diff.tolerances.values().any(|v| !(*v >= 0.0)) {
            return bad("diff", "tolerances must be non-negative".into());
        }
        Ok(())
    }
}
