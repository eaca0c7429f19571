//! Run configuration: one flat key space covering every module, merged
//! from defaults, a config file, C2F_-prefixed environment variables,
//! and command-line flags (later sources win). Unknown keys are rejected
//! everywhere, so typos fail loudly instead of silently using defaults.
//!
//! Files may be either `key = value` lines (with # comments) or a flat
//! JSON object. The canonical serialized form (sorted key=value lines)
//! is hashed and stamped into every artifact a run produces.

use crate::error::{Error, Result};
use crate::gen::{GeneratorConfig, PositionDist};
use crate::model::{ModelConfig, ReaderKind, SelectorKind, SummaryMode};
use crate::text::PrepareConfig;
use crate::train::{Method, RewardBaseline, TrainConfig};
use std::collections::BTreeMap;
use std::path::Path;

const DEFAULTS: &[(&str, &str)] = &[
    ("limits.sentences", "35"),
    ("limits.tokens", "35"),
    ("vocab.size", "10000"),
    ("vocab.placeholders", "100"),
    ("selector.kind", "bow"),
    ("selector.chunk_size", "7"),
    ("selector.filters", "64"),
    ("selector.width", "5"),
    ("summary.mode", "hard"),
    ("summary.k", "1"),
    ("model.hidden", "128"),
    ("model.embed", "64"),
    ("model.sel_hidden", "128"),
    ("model.max_answer_len", "10"),
    ("model.kind", "hierarchical"),
    ("model.base_tokens", "300"),
    ("encoder.process_pads", "true"),
    ("train.method", "pipeline"),
    ("train.decay", "0.5"),
    ("train.epochs", "10"),
    ("train.batch_size", "16"),
    ("train.lr", "0.001"),
    ("train.clip_norm", "5.0"),
    ("train.seed", "0"),
    ("train.early_stop_acc", "none"),
    ("reinforce.baseline", "none"),
    ("data.title_append", "false"),
    ("gen.n", "1000"),
    ("gen.sentences_min", "10"),
    ("gen.sentences_max", "35"),
    ("gen.entities", "60"),
    ("gen.properties", "12"),
    ("gen.values", "40"),
    ("gen.position", "uniform"),
    ("gen.distractor_rate", "0.0"),
    ("gen.missing_rate", "0.0"),
    ("gen.novel_entity_rate", "0.1"),
    ("gen.teaser_rate", "0.0"),
    ("gen.natural", "false"),
    ("gen.seed", "0"),
    ("bench.reps", "9"),
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.map.contains_key(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        self.map.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.map
            .get(key)
            .unwrap_or_else(|| panic!("config key {key:?} missing from defaults"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("{key} must be {what}, got {:?}", self.get(key))))
    }

    pub fn usize_of(&self, key: &str) -> Result<usize> {
        self.parse(key, "a non-negative integer")
    }

    pub fn u64_of(&self, key: &str) -> Result<u64> {
        self.parse(key, "a non-negative integer")
    }

    pub fn f64_of(&self, key: &str) -> Result<f64> {
        self.parse(key, "a number")
    }

    pub fn bool_of(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => Err(Error::Config(format!(
                "{key} must be true or false, got {other:?}"
            ))),
        }
    }

    /// Loads `key = value` lines or a flat JSON object.
    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let obj = value
                .as_object()
                .ok_or_else(|| Error::Config("config JSON must be an object".into()))?;
            for (k, v) in obj {
                if k == "config_hash" {
                    continue;
                }
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                self.set(k, &s)?;
            }
        } else {
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{}:{}: expected key = value",
                        path.as_ref().display(),
                        i + 1
                    ))
                })?;
                self.set(k.trim(), v.trim())?;
            }
        }
        Ok(())
    }

    /// Applies C2F_-prefixed environment variables: the first underscore
    /// after the prefix separates the key group (C2F_TRAIN_BATCH_SIZE is
    /// train.batch_size).
    pub fn merge_env(&mut self, vars: impl Iterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix("C2F_") {
                let lower = rest.to_lowercase();
                let key = match lower.split_once('_') {
                    Some((group, tail)) => format!("{group}.{tail}"),
                    None => lower,
                };
                self.set(&key, &value)
                    .map_err(|_| Error::Config(format!("environment variable {name} has no matching config key")))?;
            }
        }
        Ok(())
    }

    /// Canonical sorted key=value dump.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// FNV-1a hash of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// JSON object of every key plus the config hash, written alongside
    /// checkpoints and reports.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for (k, v) in &self.map {
            obj.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        obj.insert(
            "config_hash".to_string(),
            serde_json::Value::String(self.hash()),
        );
        serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("string map")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let selector = match self.get("selector.kind") {
            "bow" => SelectorKind::Bow,
            "chunk" => SelectorKind::Chunk,
            "cnn" => SelectorKind::Cnn,
            other => {
                return Err(Error::Config(format!(
                    "selector.kind must be bow, chunk or cnn, got {other:?}"
                )))
            }
        };
        let summary = match self.get("summary.mode") {
            "hard" => SummaryMode::Hard,
            "soft" => SummaryMode::Soft,
            other => {
                return Err(Error::Config(format!(
                    "summary.mode must be hard or soft, got {other:?}"
                )))
            }
        };
        let reader = match self.get("model.kind") {
            "hierarchical" => ReaderKind::Hierarchical,
            "base" => ReaderKind::Base,
            other => {
                return Err(Error::Config(format!(
                    "model.kind must be hierarchical or base, got {other:?}"
                )))
            }
        };
        Ok(ModelConfig {
            embed_dim: self.usize_of("model.embed")?,
            sel_hidden: self.usize_of("model.sel_hidden")?,
            gru_hidden: self.usize_of("model.hidden")?,
            cnn_filters: self.usize_of("selector.filters")?,
            cnn_width: self.usize_of("selector.width")?,
            chunk_size: self.usize_of("selector.chunk_size")?,
            selector,
            summary,
            reader,
            k: self.usize_of("summary.k")?,
            max_answer_len: self.usize_of("model.max_answer_len")?,
            process_pads: self.bool_of("encoder.process_pads")?,
            max_sentences: self.usize_of("limits.sentences")?,
            max_tokens: self.usize_of("limits.tokens")?,
            base_tokens: self.usize_of("model.base_tokens")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let method: Method = self.get("train.method").parse()?;
        let baseline = match self.get("reinforce.baseline") {
            "none" => RewardBaseline::None,
            "mean" => RewardBaseline::Mean,
            other => {
                return Err(Error::Config(format!(
                    "reinforce.baseline must be none or mean, got {other:?}"
                )))
            }
        };
        let early = match self.get("train.early_stop_acc") {
            "none" | "" => None,
            v => Some(v.parse().map_err(|_| {
                Error::Config(format!("train.early_stop_acc must be a number or none, got {v:?}"))
            })?),
        };
        let cfg = TrainConfig {
            method,
            k: self.usize_of("summary.k")?,
            decay: self.f64_of("train.decay")?,
            epochs: self.usize_of("train.epochs")?,
            batch_size: self.usize_of("train.batch_size")?,
            learning_rate: self.f64_of("train.lr")?,
            clip_norm: self.f64_of("train.clip_norm")?,
            seed: self.u64_of("train.seed")?,
            baseline,
            early_stop_train_acc: early,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn prepare_config(&self) -> Result<PrepareConfig> {
        Ok(PrepareConfig {
            max_sentences: self.usize_of("limits.sentences")?,
            max_tokens: self.usize_of("limits.tokens")?,
            title_append: self.bool_of("data.title_append")?,
            base_tokens: self.usize_of("model.base_tokens")?,
        })
    }

    pub fn generator_config(&self) -> Result<GeneratorConfig> {
        let position: PositionDist = self.get("gen.position").parse()?;
        let cfg = GeneratorConfig {
            num_examples: self.usize_of("gen.n")?,
            min_sentences: self.usize_of("gen.sentences_min")?,
            max_sentences: self.usize_of("gen.sentences_max")?,
            entities: self.usize_of("gen.entities")?,
            properties: self.usize_of("gen.properties")?,
            values: self.usize_of("gen.values")?,
            position,
            distractor_rate: self.f64_of("gen.distractor_rate")?,
            missing_evidence_rate: self.f64_of("gen.missing_rate")?,
            novel_entity_rate: self.f64_of("gen.novel_entity_rate")?,
            teaser_rate: self.f64_of("gen.teaser_rate")?,
            natural: self.bool_of("gen.natural")?,
            seed: self.u64_of("gen.seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses every typed view once, surfacing bad values early.
    pub fn validate(&self) -> Result<()> {
        self.model_config()?;
        self.train_config()?;
        self.prepare_config()?;
        self.generator_config()?;
        self.usize_of("vocab.size")?;
        self.usize_of("vocab.placeholders")?;
        self.usize_of("bench.reps")?;
        Ok(())
    }
}
