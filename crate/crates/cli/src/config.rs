//! Run configuration: one flat `key=value` namespace over every pipeline, model and
//! evaluation parameter. Nested settings use dotted keys such as `nn.learning_rate`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stresskit::bvp::BvpConfig;
use stresskit::eda::EdaConfig;
use stresskit::eval::{ExperimentConfig, ModelKind, SignalSet};
use stresskit::forest::ForestConfig;
use stresskit::nn::TrainConfig;
use stresskit::synth::SynthConfig;
use stresskit::windowing::{PipelineConfig, WindowConfig};

pub const SEED_ENV: &str = "STRESSKIT_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSettings {
    pub n_subjects: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: String,
    pub features_dir: String,
    pub output_dir: String,
    pub model: ModelKind,
    pub signals: SignalSet,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub train_fraction: f64,
    pub window: WindowConfig,
    pub eda: EdaConfig,
    pub bvp: BvpConfig,
    pub nn: TrainConfig,
    pub rf: ForestConfig,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            data_dir: "data".into(),
            features_dir: "features".into(),
            output_dir: "results".into(),
            model: ModelKind::Nn,
            signals: SignalSet::Fusion,
            seed: 42,
            jobs: 0,
            train_fraction: 0.8,
            window: WindowConfig::default(),
            eda: EdaConfig::default(),
            bvp: BvpConfig::default(),
            nn: TrainConfig::default(),
            rf: ForestConfig::default(),
            synth: SynthSettings {
                n_subjects: synth.n_subjects,
                duration_s: synth.duration_s,
            },
        }
    }
}

/// Per-model seeds are driven by the single top-level `seed` key.
const HIDDEN_KEYS: [&str; 2] = ["nn.seed", "rf.seed"];

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        leaf => {
            if !HIDDEN_KEYS.contains(&prefix) {
                out.push((prefix.to_string(), leaf.clone()));
            }
        }
    }
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "auto".into(),
        Value::Array(items) => items.iter().map(display_value).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn parse_like(template: &Value, raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    match template {
        Value::Bool(_) => match raw {
            "true" | "yes" | "1" => Ok(Value::Bool(true)),
            "false" | "no" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{raw}`")),
        },
        Value::Number(n) => {
            if n.is_f64() {
                raw.parse::<f64>()
                    .ok()
                    .and_then(serde_json::Number::from_f64)
                    .map(Value::Number)
                    .ok_or_else(|| format!("expected a number, got `{raw}`"))
            } else {
                raw.parse::<u64>()
                    .map(|v| Value::Number(v.into()))
                    .map_err(|_| format!("expected a non-negative integer, got `{raw}`"))
            }
        }
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Null => {
            if raw == "auto" {
                Ok(Value::Null)
            } else {
                raw.parse::<u64>()
                    .map(|v| Value::Number(v.into()))
                    .map_err(|_| format!("expected `auto` or a non-negative integer, got `{raw}`"))
            }
        }
        Value::Array(items) => {
            let parts: Vec<&str> = raw.split(',').collect();
            if parts.len() != items.len() {
                return Err(format!("expected {} comma-separated values, got `{raw}`", items.len()));
            }
            items
                .iter()
                .zip(parts)
                .map(|(t, p)| parse_like(t, p))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
        Value::Object(_) => Err("not a leaf key".into()),
    }
}

fn leaf_mut<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = cur.as_object_mut()?.get_mut(part)?;
    }
    (!cur.is_object()).then_some(cur)
}

impl RunConfig {
    /// Every settable key with its default value, in a stable order.
    pub fn keys() -> Vec<(String, String)> {
        let mut out = Vec::new();
        let v = serde_json::to_value(RunConfig::default()).expect("config serialises");
        flatten("", &v, &mut out);
        out.into_iter().map(|(k, v)| (k, display_value(&v))).collect()
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        if HIDDEN_KEYS.contains(&key) {
            return Err(format!("`{key}` follows the top-level `seed` key"));
        }
        let mut v = serde_json::to_value(&*self).expect("config serialises");
        let leaf = leaf_mut(&mut v, key).ok_or_else(|| format!("unknown config key `{key}`"))?;
        let mut parsed = parse_like(leaf, raw).map_err(|e| format!("{key}: {e}"))?;
        // a float-typed leaf may hold an integer literal
        if let (Value::Number(old), Value::Number(new)) = (&*leaf, &parsed) {
            if old.is_f64() && !new.is_f64() {
                parsed = Value::from(new.as_f64().unwrap_or_default());
            }
        }
        *leaf = parsed;
        *self = serde_json::from_value(v).map_err(|e| format!("{key}: {e}"))?;
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<Vec<String>, String> {
        let mut keys = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{}: expected key=value", i + 1))?;
            self.set(k.trim(), v).map_err(|e| format!("{origin}:{}: {e}", i + 1))?;
            keys.push(k.trim().to_string());
        }
        Ok(keys)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<Vec<String>, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            window: self.window.clone(),
            eda: self.eda.clone(),
            bvp: self.bvp.clone(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: self.model,
            signals: self.signals,
            train_fraction: self.train_fraction,
            split_seed: self.seed,
            nn: TrainConfig {
                seed: self.seed,
                ..self.nn.clone()
            },
            rf: ForestConfig {
                seed: self.seed,
                ..self.rf.clone()
            },
            window: Some(self.window.clone()),
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_subjects: self.synth.n_subjects,
            duration_s: self.synth.duration_s,
            seed: self.seed,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        self.nn.validate()?;
        self.rf.validate()?;
        if self.synth.n_subjects == 0 || !(self.synth.duration_s > 0.0) {
            return Err("synth.n_subjects and synth.duration_s must be positive".into());
        }
        Ok(())
    }
}
