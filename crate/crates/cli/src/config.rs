//! Config file, `--set` overrides and seed fan-out.

use std::path::Path;

use anyhow::Context;
use c2g::augment::AugmentConfig;
use c2g::ingest::CsvSchema;
use c2g::seed;
use c2g::synth::SynthSpec;
use c2g::train::TrainConfig;
use c2g::train::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub seed: u64,
    pub csv: CsvSchema,
    pub compress: CompressSettings,
    pub augment: AugmentConfig,
    pub synth: SynthSettings,
    pub train: TrainConfig,
    pub inspect: InspectSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressSettings {
    /// Fixed spacing in µm; estimated from the batch when unset.
    pub d_um: Option<f64>,
    pub round_to_int: bool,
    pub lenient: bool,
    pub tiff: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub per_class: usize,
    /// `planted` or `null`; ignored when `spec` is given.
    pub preset: String,
    pub spec: Option<SynthSpec>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            per_class: 200,
            preset: "planted".into(),
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InspectSettings {
    pub threshold: f32,
}

impl Default for InspectSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Stage seeds under the global seed.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    seed::derive(global, stage)
}

/// Reads the optional file, applies `--set` overrides and deserializes.
/// Unknown keys are rejected at every level.
pub fn load(path: Option<&Path>, sets: &[String]) -> anyhow::Result<CliConfig> {
    let mut value = serde_json::to_value(CliConfig::default())?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading config {}", p.display()))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", p.display())))?;
        merge(&mut value, file);
    }
    for s in sets {
        apply_set(&mut value, s)?;
    }
    Ok(serde_json::from_value(value).map_err(|e| UsageError(format!("config: {e}")))?)
}

/// Recursive object merge. Tagged objects (with a `kind` key) and
/// non-objects replace the target.
fn merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) if !s.contains_key("kind") => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
fn apply_set(root: &mut Value, assignment: &str) -> Result<(), UsageError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{assignment}`")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(UsageError(format!("--set: bad key `{path}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut patch = value;
    for k in keys.iter().rev() {
        let mut obj = serde_json::Map::new();
        obj.insert((*k).to_owned(), patch);
        patch = Value::Object(obj);
    }
    merge(root, patch);
    Ok(())
}
