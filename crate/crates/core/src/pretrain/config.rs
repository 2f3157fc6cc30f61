use std::collections::BTreeMap;
use std::path::Path;

use crate::config::{parse_ratio, parse_value, read_entries, unknown_key};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Pre-training settings. Defaults are the base-size production values;
/// desk-scale runs override them from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub num_attention_heads: usize,
    pub embedding_size: usize,
    pub generator_size: f64,
    pub mask_percentage: f64,
    pub warmup_steps: u64,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub attention_dropout: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub max_sequence_length: usize,
    pub batch_size: usize,
    pub training_steps: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub mts_k: usize,
    pub csp_tau: f64,
    pub seed: u64,
    pub init_std: f64,
    pub log_interval: u64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_layers: 12,
            hidden_size: 768,
            intermediate_size: 3072,
            num_attention_heads: 12,
            embedding_size: 768,
            generator_size: 1.0 / 3.0,
            mask_percentage: 15.0,
            warmup_steps: 10_000,
            learning_rate: 2e-4,
            adam_epsilon: 1e-6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            attention_dropout: 0.1,
            dropout: 0.1,
            weight_decay: 0.01,
            max_sequence_length: 512,
            batch_size: 384,
            training_steps: 1_650_000,
            lambda1: 50.0,
            lambda2: 20.0,
            lambda3: 1.0,
            mts_k: 5,
            csp_tau: 0.07,
            seed: 0,
            init_std: 0.02,
            log_interval: 100,
            checkpoint_interval: 0,
        }
    }
}

/// Loss-term switches for the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoCsp,
    NoMts,
    NoCspMts,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no-csp" => Ok(Ablation::NoCsp),
            "no-mts" => Ok(Ablation::NoMts),
            "no-csp-mts" => Ok(Ablation::NoCspMts),
            _ => Err(Error::Config(format!("unknown ablation {s:?} (full|no-csp|no-mts|no-csp-mts)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCsp => "no-csp",
            Ablation::NoMts => "no-mts",
            Ablation::NoCspMts => "no-csp-mts",
        }
    }
}

impl TrainConfig {
    pub fn apply_ablation(&mut self, a: Ablation) {
        if matches!(a, Ablation::NoMts | Ablation::NoCspMts) {
            self.lambda2 = 0.0;
        }
        if matches!(a, Ablation::NoCsp | Ablation::NoCspMts) {
            self.lambda3 = 0.0;
        }
    }

    pub fn mask_rate(&self) -> f64 {
        self.mask_percentage / 100.0
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            layers: self.num_layers,
            hidden: self.hidden_size,
            heads: self.num_attention_heads,
            intermediate: self.intermediate_size,
            embedding_size: self.embedding_size,
            max_positions: self.max_sequence_length,
            vocab_size,
            generator_multiplier: self.generator_size,
            dropout: self.dropout,
            attention_dropout: self.attention_dropout,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.csp_tau > 0.0) {
            return err(format!("csp_tau must be positive, got {}", self.csp_tau));
        }
        for (k, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0) {
                return err(format!("{k} must be nonnegative, got {v}"));
            }
        }
        if self.warmup_steps > self.training_steps {
            return err(format!("warmup_steps {} exceed training_steps {}", self.warmup_steps, self.training_steps));
        }
        if !(0.0..100.0).contains(&self.mask_percentage) {
            return err(format!("mask_percentage {} outside [0, 100)", self.mask_percentage));
        }
        if self.batch_size == 0 || self.training_steps == 0 || self.log_interval == 0 {
            return err("batch_size, training_steps, and log_interval must be positive".into());
        }
        if self.max_sequence_length < 3 {
            return err("max_sequence_length must leave room for [CLS] and [SEP]".into());
        }
        if !(self.learning_rate >= 0.0 && self.adam_epsilon > 0.0) {
            return err("learning_rate must be nonnegative and adam_epsilon positive".into());
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return err("adam betas must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0 && self.init_std > 0.0) {
            return err("weight_decay must be nonnegative and init_std positive".into());
        }
        if self.num_attention_heads == 0 || self.hidden_size % self.num_attention_heads != 0 {
            return err("hidden_size must be divisible by num_attention_heads".into());
        }
        self.model_config(crate::vocab::NUM_SPECIALS + 1).validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "num_layers" => self.num_layers = parse_value(key, v)?,
            "hidden_size" => self.hidden_size = parse_value(key, v)?,
            "intermediate_size" => self.intermediate_size = parse_value(key, v)?,
            "num_attention_heads" => self.num_attention_heads = parse_value(key, v)?,
            "attention_head_size" => {
                // derived; checked after all keys are applied
                let _: usize = parse_value(key, v)?;
            }
            "embedding_size" => self.embedding_size = parse_value(key, v)?,
            "generator_size" => self.generator_size = parse_ratio(key, v)?,
            "mask_percentage" => self.mask_percentage = parse_value(key, v)?,
            "learning_rate_decay" => {
                if v != "linear" {
                    return Err(Error::Config(format!("learning_rate_decay: only `linear` is supported, got {v:?}")));
                }
            }
            "warmup_steps" => self.warmup_steps = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "attention_dropout" => self.attention_dropout = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "max_sequence_length" => self.max_sequence_length = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "training_steps" => self.training_steps = parse_value(key, v)?,
            "lambda1" => self.lambda1 = parse_value(key, v)?,
            "lambda2" => self.lambda2 = parse_value(key, v)?,
            "lambda3" => self.lambda3 = parse_value(key, v)?,
            "mts_k" => self.mts_k = parse_value(key, v)?,
            "csp_tau" => self.csp_tau = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "init_std" => self.init_std = parse_value(key, v)?,
            "log_interval" => self.log_interval = parse_value(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_value(key, v)?,
            _ => return Err(unknown_key(key)),
        }
        Ok(())
    }

    /// Defaults overridden by `entries`; unknown keys are errors.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        if let Some((_, v)) = entries.iter().find(|(k, _)| k == "attention_head_size") {
            let size: usize = parse_value("attention_head_size", v)?;
            if cfg.num_attention_heads == 0 || size * cfg.num_attention_heads != cfg.hidden_size {
                return Err(Error::Config(format!(
                    "attention_head_size {size} × {} heads ≠ hidden_size {}",
                    cfg.num_attention_heads, cfg.hidden_size
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        TrainConfig::from_entries(&crate::config::parse_entries(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainConfig::from_entries(&read_entries(path)?)
    }

    /// Every key with its current value, in a stable order. Parsing the
    /// result reproduces `self`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let f = |v: f64| format!("{v:?}");
        [
            ("num_layers", self.num_layers.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("intermediate_size", self.intermediate_size.to_string()),
            ("num_attention_heads", self.num_attention_heads.to_string()),
            ("embedding_size", self.embedding_size.to_string()),
            ("generator_size", f(self.generator_size)),
            ("mask_percentage", f(self.mask_percentage)),
            ("learning_rate_decay", "linear".to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("learning_rate", f(self.learning_rate)),
            ("adam_epsilon", f(self.adam_epsilon)),
            ("adam_beta1", f(self.adam_beta1)),
            ("adam_beta2", f(self.adam_beta2)),
            ("attention_dropout", f(self.attention_dropout)),
            ("dropout", f(self.dropout)),
            ("weight_decay", f(self.weight_decay)),
            ("max_sequence_length", self.max_sequence_length.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("training_steps", self.training_steps.to_string()),
            ("lambda1", f(self.lambda1)),
            ("lambda2", f(self.lambda2)),
            ("lambda3", f(self.lambda3)),
            ("mts_k", self.mts_k.to_string()),
            ("csp_tau", f(self.csp_tau)),
            ("seed", self.seed.to_string()),
            ("init_std", f(self.init_std)),
            ("log_interval", self.log_interval.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub(crate) fn from_prefixed(pairs: &BTreeMap<String, String>, prefix: &str) -> Result<Self> {
        let entries: Vec<(String, String)> = pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone())))
            .collect();
        TrainConfig::from_entries(&entries)
    }
}
