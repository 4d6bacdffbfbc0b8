//! `key = value` training configuration files.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! [`TrainConfig::to_text`] prints every key in a fixed order, and its hash
//! identifies a resolved configuration.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoders::{Architecture, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Double,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Validation every this many epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::desk(Architecture::Lstm),
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            seed: 0,
            precision: Precision::Double,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub const KEYS: [&str; 16] = [
    "architecture",
    "dim",
    "layers",
    "heads",
    "max_len",
    "rpe_clip",
    "tied_embeddings",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "epochs",
    "seed",
    "precision",
    "eval_every",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        match key {
            "architecture" => {
                m.architecture = value.parse().map_err(|reason| ConfigError::Value {
                    key: key.into(),
                    value: value.into(),
                    reason,
                })?
            }
            "dim" => m.dim = num(key, value)?,
            "layers" => m.layers = num(key, value)?,
            "heads" => m.heads = num(key, value)?,
            "max_len" => m.max_len = num(key, value)?,
            "rpe_clip" => m.rpe_clip = num(key, value)?,
            "tied_embeddings" => m.tied_embeddings = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "precision" => {
                self.precision = match value {
                    "double" => Precision::Double,
                    other => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: other.into(),
                            reason: "only double precision is supported".into(),
                        })
                    }
                }
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
        let mut cfg = TrainConfig::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, found {line:?}"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::UnknownKey(k) => ConfigError::Syntax { line: i + 1, reason: format!("unknown key {k:?}") },
                e => ConfigError::Syntax { line: i + 1, reason: e.to_string() },
            })?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, reason: format!("override {kv:?} is not key=value") })?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let values = [
            m.architecture.tag().to_string(),
            m.dim.to_string(),
            m.layers.to_string(),
            m.heads.to_string(),
            m.max_len.to_string(),
            m.rpe_clip.to_string(),
            m.tied_embeddings.to_string(),
            self.batch_size.to_string(),
            format!("{:?}", self.learning_rate),
            format!("{:?}", self.beta1),
            format!("{:?}", self.beta2),
            format!("{:?}", self.epsilon),
            self.epochs.to_string(),
            self.seed.to_string(),
            "double".to_string(),
            self.eval_every.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_text().as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        let cfg = TrainConfig::parse("# desk run\narchitecture = tree-lstm\ndim = 32  # small\n\nepochs=5\n").unwrap();
        assert_eq!(cfg.model.architecture, Architecture::TreeLstm);
        assert_eq!(cfg.model.dim, 32);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.batch_size, 128);
        let mut c2 = cfg.clone();
        c2.apply_override("learning_rate=0.01").unwrap();
        assert_eq!(c2.learning_rate, 0.01);
        assert_ne!(c2.hash(), cfg.hash());
    }

    #[test]
    fn text_round_trips() {
        let cfg = TrainConfig { learning_rate: 3e-3, seed: 42, ..TrainConfig::default() };
        let back = TrainConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn errors_name_lines() {
        assert!(matches!(TrainConfig::parse("dim = 8\nbogus = 1\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(TrainConfig::parse("dim\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(TrainConfig::parse("precision = single\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(TrainConfig::parse("beta1 = 1.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(TrainConfig::parse("batch_size = 0\n"), Err(ConfigError::Invalid(_))));
    }
}
