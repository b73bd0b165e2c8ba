use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{DiffConfig, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl Assertion {
    /// Passes when `value <= limit`; non-finite values fail.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Assertion {
            name: name.to_string(),
            passed: value.is_finite() && value <= limit,
            value: if value.is_finite() { value } else { f64::MAX },
            limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Assertion {
            name: name.to_string(),
            passed: value.is_finite() && value >= limit,
            value: if value.is_finite() { value } else { f64::MIN },
            limit,
        }
    }

    pub fn equal(name: &str, value: f64, want: f64) -> Self {
        Assertion {
            name: name.to_string(),
            passed: value == want,
            value,
            limit: want,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub metric: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub files: Vec<String>,
    pub assertions: Vec<Assertion>,
    /// Scalar results compared by `diff`.
    pub values: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn failures(&self) -> Vec<&str> {
        self.assertions.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDiff {
    pub field: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub tolerance: f64,
}

impl FieldDiff {
    pub fn delta(&self) -> Option<f64> {
        Some((self.a? - self.b?).abs())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("manifests come from different subcommands: `{0}` and `{1}`")]
pub struct SubcommandMismatch(pub String, pub String);

/// Fields whose values differ by more than their tolerance, or that exist in
/// only one manifest. Assertion values are compared as `assert.<name>`.
pub fn diff(a: &Manifest, b: &Manifest, tol: &DiffConfig) -> Result<Vec<FieldDiff>, SubcommandMismatch> {
    if a.subcommand != b.subcommand {
        return Err(SubcommandMismatch(a.subcommand.clone(), b.subcommand.clone()));
    }
    let fields = |m: &Manifest| {
        let mut f = m.values.clone();
        for x in &m.assertions {
            f.insert(format!("assert.{}", x.name), x.value);
        }
        f
    };
    let (fa, fb) = (fields(a), fields(b));
    let mut keys: Vec<&String> = fa.keys().chain(fb.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .filter_map(|k| {
            let d = FieldDiff {
                field: k.clone(),
                a: fa.get(k).copied(),
                b: fb.get(k).copied(),
                tolerance: tol.tolerance(k),
            };
            match d.delta() {
                Some(x) if x <= d.tolerance => None,
                _ => Some(d),
            }
        })
        .collect())
}
