//! JSON configuration files and `key=value` overrides.
//!
//! | key                 | default                         |
//! |---------------------|---------------------------------|
//! | `lambda`            | ⌈20 ln n⌉                       |
//! | `budget`            | 10⁷ evaluations                 |
//! | `seed`              | 0                               |
//! | `record_trajectory` | false                           |
//! | `trajectory_stride` | 1 for λ ≤ 2048, else 10         |
//! | `gamma0`            | 0.25                            |
//! | `tie_break`         | `"lowest_index"`                |
//! | flip pmf            | p₀ = p₁ = 0.5                   |
//! | `C` of (M4')        | 1                               |

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bitstring::Bitstring;
use crate::engine::{default_lambda, default_stride, EAConfig, DEFAULT_BUDGET, DEFAULT_GAMMA0};
use crate::error::{Error, Result};
use crate::fitness::FitnessSpec;
use crate::mutation::MutationSpec;
use crate::selection::{SelectionSpec, TieBreak};

/// On-disk form of a `run` config; everything but the operators is optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    fitness: FitnessSpec,
    selection: SelectionSpec,
    mutation: MutationSpec,
    #[serde(default)]
    lambda: Option<usize>,
    #[serde(default)]
    budget: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    record_trajectory: Option<bool>,
    #[serde(default)]
    trajectory_stride: Option<usize>,
    #[serde(default)]
    gamma0: Option<f64>,
    #[serde(default)]
    tie_break: Option<TieBreak>,
}

impl TryFrom<RunConfigFile> for EAConfig {
    type Error = Error;

    fn try_from(f: RunConfigFile) -> Result<Self> {
        let lambda = f.lambda.unwrap_or_else(|| default_lambda(f.fitness.n()));
        let cfg = EAConfig {
            budget: f.budget.unwrap_or(DEFAULT_BUDGET),
            seed: f.seed.unwrap_or(0),
            record_trajectory: f.record_trajectory.unwrap_or(false),
            trajectory_stride: f.trajectory_stride.unwrap_or_else(|| default_stride(lambda)),
            gamma0: f.gamma0.unwrap_or(DEFAULT_GAMMA0),
            tie_break: f.tie_break.unwrap_or_default(),
            fitness: f.fitness,
            selection: f.selection,
            mutation: f.mutation,
            lambda,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Config of the `opo` command: the elitist (1+1) EA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpoConfig {
    pub fitness: FitnessSpec,
    pub mutation: MutationSpec,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub seed: u64,
    /// Forced initial point; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Bitstring>,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl OpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.mutation.validate(self.fitness.n())?;
        if self.budget < 1 {
            return Err(Error::Invalid("budget ≥ 1".into()));
        }
        if let Some(s) = &self.start {
            if s.len() != self.fitness.n() {
                return Err(Error::LengthMismatch {
                    left: self.fitness.n(),
                    right: s.len(),
                });
            }
        }
        Ok(())
    }
}

/// Reads a JSON file, applies overrides, and decodes it into `T`.
pub fn parse_config<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    decode(value)
}

/// Decodes a JSON value. Failures of a documented invariant surface as
/// [`Error::Invalid`], structural problems as [`Error::Parse`].
pub fn decode<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        match msg.find("invalid parameter: ") {
            Some(i) => Error::Invalid(msg[i + "invalid parameter: ".len()..].to_string()),
            None if msg.starts_with("length mismatch") => Error::Invalid(msg),
            None => Error::Parse(msg),
        }
    })
}

/// Applies one `key=value` override. Dotted keys address nested objects;
/// a bare key replaces the unique field of that name anywhere in the
/// document, or is added at top level when absent. The value is read as
/// JSON when it parses, otherwise as a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Parse(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));

    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let mut hits = Vec::new();
        find_key(doc, key, &mut Vec::new(), &mut hits);
        match hits.len() {
            0 => vec![key.to_string()],
            1 => hits.remove(0),
            _ => {
                return Err(Error::Parse(format!(
                    "override key '{key}' is ambiguous; use a dotted path"
                )))
            }
        }
    };

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = doc;
    for seg in parents {
        node = node
            .get_mut(seg.as_str())
            .ok_or_else(|| Error::Parse(format!("override path '{key}': no key '{seg}'")))?;
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), value);
            Ok(())
        }
        _ => Err(Error::Parse(format!("override path '{key}' does not name an object field"))),
    }
}

fn find_key(v: &Value, key: &str, prefix: &mut Vec<String>, hits: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            prefix.push(k.clone());
            if k == key {
                hits.push(prefix.clone());
            }
            find_key(child, key, prefix, hits);
            prefix.pop();
        }
    }
}
