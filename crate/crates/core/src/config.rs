//! Key-value configuration files.
//!
//! Format: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; later duplicates of a key win. Two schemas are read
//! from this format:
//!
//! Pipeline options:
//! - `basis.a`, `basis.b` — comma-separated reals, both of feature length;
//!   absent means the built-in default basis.
//!
//! Scenario files (all keys optional; defaults in parentheses):
//! - `duration_s` (60), `seed` (0)
//! - `attack.enabled` (false), `attack.start_s`, `attack.end_s`,
//!   `attack.pps`, `attack.clients` (10)
//! - `profile.<name>.sessions_per_min`, `profile.<name>.mean_packets`,
//!   `profile.<name>.mean_inter_arrival_s`, `profile.<name>.size.ln_mean`,
//!   `profile.<name>.size.ln_sigma` — overrides for the built-in profiles
//!   (`http`, `https`, `ssh`, `bittorrent`, `icmp`).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::projection::{default_basis, make_basis, ProjectionBasis, ProjectionError};
use crate::traffic::ScenarioSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key {key}: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown key {key}")]
    UnknownKey { key: String },
    #[error("basis rejected: {0}")]
    Basis(#[from] ProjectionError),
}

/// Parsed key-value pairs, order-independent, last duplicate wins.
#[derive(Debug, Default, Clone)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

pub fn parse_config(text: &str) -> Result<ConfigMap, ConfigError> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected key = value, got {stripped:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                msg: "empty key".into(),
            });
        }
        entries.insert(key.to_string(), value.trim().to_string());
    }
    Ok(ConfigMap { entries })
}

impl ConfigMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("{v:?} is not a number: {e}"),
                })
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("{v:?} is not an unsigned integer: {e}"),
                })
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("{other:?} is not a boolean"),
                }),
            })
            .transpose()
    }

    /// Comma-separated list of reals.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<f64>().map_err(|e| ConfigError::Value {
                            key: key.to_string(),
                            msg: format!("{:?} is not a number: {e}", item.trim()),
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Builds the projection basis from `basis.a`/`basis.b`, falling back to the
/// default basis when both are absent. Supplying only one of the two keys is
/// rejected.
pub fn basis_from_config(map: &ConfigMap, n: usize) -> Result<ProjectionBasis, ConfigError> {
    let a = map.get_f64_list("basis.a")?;
    let b = map.get_f64_list("basis.b")?;
    match (a, b) {
        (None, None) => Ok(default_basis(n)?),
        (Some(a), Some(b)) => Ok(make_basis(&a, &b)?),
        _ => Err(ConfigError::Value {
            key: "basis.a/basis.b".into(),
            msg: "both keys are required when overriding the basis".into(),
        }),
    }
}

/// Builds a scenario from a config map, starting from the built-in defaults.
/// Unknown keys are rejected so typos fail loudly.
pub fn scenario_from_config(map: &ConfigMap) -> Result<ScenarioSpec, ConfigError> {
    let mut spec = ScenarioSpec::background_only(60.0, 0);
    for key in map.keys() {
        let known = matches!(
            key,
            "duration_s"
                | "seed"
                | "attack.enabled"
                | "attack.start_s"
                | "attack.end_s"
                | "attack.pps"
                | "attack.clients"
        ) || key.starts_with("profile.");
        if !known {
            return Err(ConfigError::UnknownKey { key: key.to_string() });
        }
    }
    if let Some(v) = map.get_f64("duration_s")? {
        spec.duration_s = v;
    }
    if let Some(v) = map.get_u64("seed")? {
        spec.seed = v;
    }
    if let Some(v) = map.get_bool("attack.enabled")? {
        spec.attack.enabled = v;
    }
    if let Some(v) = map.get_f64("attack.start_s")? {
        spec.attack.start_s = v;
    }
    if let Some(v) = map.get_f64("attack.end_s")? {
        spec.attack.end_s = v;
    }
    if let Some(v) = map.get_f64("attack.pps")? {
        spec.attack.request_rate_pps = v;
    }
    if let Some(v) = map.get_u64("attack.clients")? {
        spec.attack.client_count = v as usize;
    }
    for key in map.keys() {
        let Some(rest) = key.strip_prefix("profile.") else {
            continue;
        };
        let Some((name, field)) = rest.split_once('.') else {
            return Err(ConfigError::UnknownKey { key: key.to_string() });
        };
        let profile = spec
            .profiles
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| ConfigError::Value {
                key: key.to_string(),
                msg: format!("no profile named {name:?}"),
            })?;
        let value = map.get_f64(key)?.expect("key exists");
        match field {
            "sessions_per_min" => profile.sessions_per_min = value,
            "mean_packets" => profile.mean_packets = value,
            "mean_inter_arrival_s" => profile.mean_inter_arrival_s = value,
            "size.ln_mean" => profile.size.ln_mean = value,
            "size.ln_sigma" => profile.size.ln_sigma = value,
            other => {
                return Err(ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("unknown profile field {other:?}"),
                })
            }
        }
    }
    Ok(spec)
}
