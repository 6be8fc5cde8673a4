//! Flat `key = value` experiment configuration with dotted keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cascade::{InitScheme, InterfaceKind, LengthPolicy};
use crate::data::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::nnet::TransformerConfig;
use crate::training::TrainConfig;

/// Every accepted key with its default. `auto` defers to the training
/// stage's own default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("data.alphabet", "12"),
    ("data.dev_size", "100"),
    ("data.direct_size", "1000"),
    ("data.dup_rate", "0.25"),
    ("data.max_len", "8"),
    ("data.min_count", "1"),
    ("data.min_len", "3"),
    ("data.pretrain_size", "2000"),
    ("data.seed", "7"),
    ("data.task", "cipher-reorder"),
    ("data.test_size", "200"),
    ("data.window", "3"),
    ("decode.beam", "4"),
    ("decode.hard", "false"),
    ("decode.iterations", "1"),
    ("decode.seed", "0"),
    ("interface.init", "both"),
    ("interface.kind", "posteriors"),
    ("length.policy", "predicted"),
    ("model.d_ff", "128"),
    ("model.d_model", "64"),
    ("model.dropout", "0.1"),
    ("model.max_positions", "128"),
    ("model.n_dec_layers", "2"),
    ("model.n_enc_layers", "2"),
    ("model.n_heads", "4"),
    ("model.precision", "f32"),
    ("train.accum_steps", "1"),
    ("train.adam_eps", "1e-8"),
    ("train.batch_tokens", "4096"),
    ("train.beta1", "0.9"),
    ("train.beta2", "0.98"),
    ("train.eval_beam", "1"),
    ("train.eval_interval", "500"),
    ("train.eval_iterations", "5"),
    ("train.freeze", ""),
    ("train.label_smoothing", "auto"),
    ("train.length_loss_weight", "0.1"),
    ("train.lr", "auto"),
    ("train.max_updates", "20000"),
    ("train.seed", "1"),
    ("train.snapshots", ""),
    ("train.warmup", "4000"),
];

/// Which training recipe a config is resolved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    PretrainAr,
    PretrainNat,
    Finetune,
}

/// Resolved configuration: defaults overlaid with file and command-line
/// values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl ExperimentConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key '{key}'"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{pair}' is not key=value")))?;
        self.set(k, v)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| Error::Config(format!("{origin}:{}: {}", i + 1, strip(&e))))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))
    }

    pub fn parse<V: FromStr>(&self, key: &str) -> Result<V>
    where
        V::Err: fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|e| Error::Config(format!("{key} = '{raw}': {e}")))
    }

    fn auto(&self, key: &str, default: f64) -> Result<f64> {
        if self.get(key)? == "auto" {
            Ok(default)
        } else {
            self.parse(key)
        }
    }

    fn list<V: FromStr>(&self, key: &str) -> Result<Vec<V>>
    where
        V::Err: fmt::Display,
    {
        let raw = self.get(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Config(format!("{key} item '{s}': {e}")))
            })
            .collect()
    }

    /// The resolved text: every key in sorted order.
    pub fn resolved(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hex SHA-256 of [`ExperimentConfig::resolved`].
    pub fn hash(&self) -> String {
        sha256_hex(self.resolved().as_bytes())
    }

    /// Short form of the hash used in file contents.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn f64_mode(&self) -> Result<bool> {
        match self.get("model.precision")? {
            "f32" => Ok(false),
            "f64" => Ok(true),
            other => Err(Error::Config(format!(
                "model.precision = '{other}' (expected f32 or f64)"
            ))),
        }
    }

    pub fn transformer(&self, vocab_src: usize, vocab_tgt: usize) -> Result<TransformerConfig> {
        let cfg = TransformerConfig {
            d_model: self.parse("model.d_model")?,
            n_heads: self.parse("model.n_heads")?,
            d_ff: self.parse("model.d_ff")?,
            n_enc_layers: self.parse("model.n_enc_layers")?,
            n_dec_layers: self.parse("model.n_dec_layers")?,
            dropout: self.parse("model.dropout")?,
            max_positions: self.parse("model.max_positions")?,
            vocab_size_src: vocab_src,
            vocab_size_tgt: vocab_tgt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self, stage: TrainStage) -> Result<TrainConfig> {
        let base = match stage {
            TrainStage::PretrainAr => TrainConfig::pretrain(),
            TrainStage::PretrainNat => TrainConfig::nat_pretrain(),
            TrainStage::Finetune => TrainConfig::finetune(),
        };
        let cfg = TrainConfig {
            lr: self.auto("train.lr", base.lr)?,
            warmup: self.parse("train.warmup")?,
            betas: (self.parse("train.beta1")?, self.parse("train.beta2")?),
            adam_eps: self.parse("train.adam_eps")?,
            batch_tokens: self.parse("train.batch_tokens")?,
            accum_steps: self.parse("train.accum_steps")?,
            max_updates: self.parse("train.max_updates")?,
            label_smoothing: self.auto("train.label_smoothing", base.label_smoothing)?,
            seed: self.parse("train.seed")?,
            eval_interval: self.parse("train.eval_interval")?,
            eval_beam: self.parse("train.eval_beam")?,
            eval_iterations: self.parse("train.eval_iterations")?,
            length_loss_weight: self.parse("train.length_loss_weight")?,
            freeze: self.list("train.freeze")?,
            snapshots: self.list("train.snapshots")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn task(&self) -> Result<TaskSpec> {
        Ok(TaskSpec {
            kind: self.parse::<TaskKind>("data.task")?,
            alphabet: self.parse("data.alphabet")?,
            min_len: self.parse("data.min_len")?,
            max_len: self.parse("data.max_len")?,
            window: self.parse("data.window")?,
            dup_rate: self.parse("data.dup_rate")?,
            pretrain_size: self.parse("data.pretrain_size")?,
            direct_size: self.parse("data.direct_size")?,
            dev_size: self.parse("data.dev_size")?,
            test_size: self.parse("data.test_size")?,
        })
    }

    pub fn interface(&self) -> Result<InterfaceKind> {
        self.parse("interface.kind")
    }

    pub fn init_scheme(&self) -> Result<InitScheme> {
        self.parse("interface.init")
    }

    pub fn length_policy(&self) -> Result<LengthPolicy> {
        self.parse("length.policy")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
