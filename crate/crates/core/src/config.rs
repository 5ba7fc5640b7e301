//! Experiment configuration: JSON overrides merged onto the shipped
//! defaults, validated field by field, with a canonical form for hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::detection::{DetectorParams, MeasurementSetting};
use crate::error::{Error, Result};
use crate::protocol::{EfficiencyParams, NoiseParams};

/// Defaults compiled into the library.
pub const DEFAULTS_JSON: &str = include_str!("../defaults.json");

/// Environment variable naming an alternative defaults file.
pub const DEFAULTS_ENV: &str = "CES_DEFAULTS";

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub noise: NoiseParams,
    pub efficiency: EfficiencyParams,
    pub detector: DetectorParams,
    /// Storage time between the two photons, μs.
    pub dt_us: f64,
    /// CHSH settings `(α,β), (α,β′), (α′,β), (α′,β′)`.
    pub settings: Vec<MeasurementSetting>,
    pub seed: u64,
    /// Sequences per Bell setting.
    pub n_sequences: u64,
    /// Sequences per tomography basis pair.
    pub n_per_basis: u64,
    /// Storage times for sweep mode, μs.
    pub sweep_dt_us: Vec<f64>,
    /// Field paths whose values are modeling assumptions, not measurements.
    #[serde(default)]
    pub assumptions: Vec<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.noise.validate()?;
        self.efficiency.validate()?;
        self.detector.validate()?;
        check_dt("dt_us", self.dt_us)?;
        if self.settings.len() != 4 {
            return Err(Error::config(
                "settings",
                format!("expected 4 CHSH settings, got {}", self.settings.len()),
            ));
        }
        for (i, s) in self.settings.iter().enumerate() {
            if !s.alpha_deg.is_finite() || !s.beta_deg.is_finite() {
                return Err(Error::config(format!("settings[{i}]"), "angles must be finite"));
            }
        }
        if self.n_sequences == 0 {
            return Err(Error::config("n_sequences", "must be > 0"));
        }
        if self.n_per_basis == 0 {
            return Err(Error::config("n_per_basis", "must be > 0"));
        }
        for (i, &dt) in self.sweep_dt_us.iter().enumerate() {
            check_dt(&format!("sweep_dt_us[{i}]"), dt)?;
        }
        let tree = serde_json::to_value(self)?;
        for (i, a) in self.assumptions.iter().enumerate() {
            if lookup(&tree, a).is_none() {
                return Err(Error::config(format!("assumptions[{i}]"), format!("no field `{a}`")));
            }
        }
        Ok(())
    }

    /// Sorted keys, floats with 17 significant digits, no whitespace.
    pub fn canonical_json(&self) -> Result<String> {
        let mut out = String::new();
        write_canonical(&serde_json::to_value(self)?, &mut out);
        Ok(out)
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical_json()? + "\n")?;
        Ok(())
    }
}

fn check_dt(path: &str, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::config(path, format!("must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

fn lookup<'a>(v: &'a Value, dotted: &str) -> Option<&'a Value> {
    dotted.split('.').try_fold(v, |node, key| node.get(key))
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push(':');
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => out.push_str(&u.to_string()),
            (_, Some(i), _) => out.push_str(&i.to_string()),
            (_, _, Some(f)) => out.push_str(&format!("{f:.16e}")),
            _ => out.push_str(&n.to_string()),
        },
        other => out.push_str(&other.to_string()),
    }
}

/// Defaults as a JSON tree: `CES_DEFAULTS` if set, else the built-in file.
pub fn defaults_value() -> Result<Value> {
    match std::env::var_os(DEFAULTS_ENV) {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(DEFAULTS_ENV, format!("cannot read {}: {e}", path.display())))?;
            parse_tree(&text, DEFAULTS_ENV)
        }
        None => parse_tree(DEFAULTS_JSON, "defaults.json"),
    }
}

fn parse_tree(text: &str, origin: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::config(origin, format!("invalid JSON: {e}")))
}

pub fn defaults() -> Result<ExperimentConfig> {
    from_tree(defaults_value()?)
}

/// Overlays `overrides` on the defaults. Objects merge key by key; every
/// other value (including arrays) replaces the default.
pub fn from_overrides(overrides: &Value) -> Result<ExperimentConfig> {
    let mut tree = defaults_value()?;
    merge(&mut tree, overrides, "")?;
    from_tree(tree)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
    let overrides = parse_tree(&text, &path.display().to_string())?;
    if !overrides.is_object() {
        return Err(Error::config("", "config must be a JSON object"));
    }
    from_overrides(&overrides)
}

fn merge(base: &mut Value, over: &Value, path: &str) -> Result<()> {
    let (Value::Object(base_map), Value::Object(over_map)) = (&mut *base, over) else {
        *base = over.clone();
        return Ok(());
    };
    for (k, v) in over_map {
        let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match base_map.get_mut(k) {
            Some(slot) => {
                if slot.is_object() != v.is_object() {
                    return Err(Error::config(child, "type mismatch with defaults"));
                }
                merge(slot, v, &child)?;
            }
            None if is_optional(&child) => {
                base_map.insert(k.clone(), v.clone());
            }
            None => return Err(Error::config(child, "unknown key")),
        }
    }
    Ok(())
}

fn is_optional(path: &str) -> bool {
    path == "assumptions"
}

fn from_tree(tree: Value) -> Result<ExperimentConfig> {
    check_keys(&tree)?;
    let cfg: ExperimentConfig = serde_json::from_value(tree).map_err(|e| Error::config(field_of(&e), e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Rejects unknown keys with their full path, which serde does not report.
fn check_keys(tree: &Value) -> Result<()> {
    let template = serde_json::to_value(template_config())?;
    walk_keys(tree, &template, "")
}

fn walk_keys(v: &Value, template: &Value, path: &str) -> Result<()> {
    if let (Value::Object(m), Value::Object(t)) = (v, template) {
        for (k, child) in m {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match t.get(k) {
                Some(tc) => walk_keys(child, tc, &p)?,
                None => return Err(Error::config(p, "unknown key")),
            }
        }
    }
    Ok(())
}

fn field_of(e: &serde_json::Error) -> String {
    // serde reports "missing field `x`" / "unknown field `x`"; surface the name
    let msg = e.to_string();
    msg.split('`').nth(1).unwrap_or("").to_string()
}

fn template_config() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        noise: NoiseParams::ideal(),
        efficiency: EfficiencyParams { p_photon1: 1.0, p_photon2: 1.0, eta_det: 1.0, rep_rate: 1.0 },
        detector: DetectorParams::ideal(),
        dt_us: 0.0,
        settings: Vec::new(),
        seed: 0,
        n_sequences: 1,
        n_per_basis: 1,
        sweep_dt_us: Vec::new(),
        assumptions: Vec::new(),
    }
}

/// Canonical JSON of `value` (objects with sorted keys, 17-digit floats).
pub fn canonical_value(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = from_overrides(&json!({})).unwrap();
        assert_eq!(cfg, defaults().unwrap());
        assert_eq!(cfg.efficiency.p_photon1, 0.086);
        assert_eq!(cfg.efficiency.eta_det, 0.2);
        assert_eq!(cfg.efficiency.rep_rate, 50.0);
        assert_eq!(cfg.noise.tau_e, 5.7);
        assert_eq!(cfg.dt_us, 0.8);
    }

    #[test]
    fn range_error_names_field() {
        let err = from_overrides(&json!({"noise": {"v0": 1.5}})).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "noise.v0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_path() {
        let err = from_overrides(&json!({"detector": {"gain": 2}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "detector.gain"));
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = defaults().unwrap();
        let text = cfg.canonical_json().unwrap();
        let back = from_overrides(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.canonical_json().unwrap(), text);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = defaults().unwrap();
        let b = from_overrides(&json!({"seed": 99})).unwrap();
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
