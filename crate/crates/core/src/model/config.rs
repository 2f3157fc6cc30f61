use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Sizes of one encoder stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub intermediate: usize,
}

impl StackConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Discriminator sizes plus everything the generator derives from them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub embedding_size: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub generator_multiplier: f64,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    /// Base-size discriminator (12 × 768, 12 heads, 3072 intermediate).
    pub fn base(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            intermediate: 3072,
            embedding_size: 768,
            max_positions: 512,
            vocab_size,
            generator_multiplier: 1.0 / 3.0,
            dropout: 0.1,
            attention_dropout: 0.1,
            layer_norm_eps: 1e-12,
        }
    }

    /// Small model for desk-scale runs.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            layers: 2,
            hidden: 48,
            heads: 6,
            intermediate: 192,
            embedding_size: 48,
            max_positions: 128,
            vocab_size,
            generator_multiplier: 1.0 / 3.0,
            dropout: 0.1,
            attention_dropout: 0.1,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn discriminator(&self) -> StackConfig {
        StackConfig { layers: self.layers, hidden: self.hidden, heads: self.heads, intermediate: self.intermediate }
    }

    pub fn generator(&self) -> Result<StackConfig> {
        derive_generator_config(&self.discriminator(), self.generator_multiplier)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("intermediate", self.intermediate),
            ("embedding_size", self.embedding_size),
            ("max_positions", self.max_positions),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!("hidden {} not divisible by heads {}", self.hidden, self.heads)));
        }
        if self.embedding_size != self.hidden {
            return Err(Error::Config(format!(
                "embedding_size {} must equal discriminator hidden {} (candidate scoring uses the tied table)",
                self.embedding_size, self.hidden
            )));
        }
        if self.vocab_size <= crate::vocab::NUM_SPECIALS {
            return Err(Error::Config("vocab_size must exceed the special tokens".into()));
        }
        for (k, v) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{k} {v} outside [0, 1)")));
            }
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        let g = self.generator()?;
        if g.hidden % g.heads != 0 {
            return Err(Error::Config(format!("generator hidden {} not divisible by heads {}", g.hidden, g.heads)));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("model.layers".into(), self.layers.to_string()),
            ("model.hidden".into(), self.hidden.to_string()),
            ("model.heads".into(), self.heads.to_string()),
            ("model.intermediate".into(), self.intermediate.to_string()),
            ("model.embedding_size".into(), self.embedding_size.to_string()),
            ("model.max_positions".into(), self.max_positions.to_string()),
            ("model.vocab_size".into(), self.vocab_size.to_string()),
            ("model.generator_multiplier".into(), format!("{:?}", self.generator_multiplier)),
            ("model.dropout".into(), format!("{:?}", self.dropout)),
            ("model.attention_dropout".into(), format!("{:?}", self.attention_dropout)),
            ("model.layer_norm_eps".into(), format!("{:?}", self.layer_norm_eps)),
        ]
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        fn get<V: std::str::FromStr>(pairs: &BTreeMap<String, String>, k: &str) -> Result<V> {
            let v = pairs.get(k).ok_or_else(|| Error::Format(format!("missing {k}")))?;
            v.parse().map_err(|_| Error::Format(format!("bad value for {k}: {v:?}")))
        }
        let cfg = ModelConfig {
            layers: get(pairs, "model.layers")?,
            hidden: get(pairs, "model.hidden")?,
            heads: get(pairs, "model.heads")?,
            intermediate: get(pairs, "model.intermediate")?,
            embedding_size: get(pairs, "model.embedding_size")?,
            max_positions: get(pairs, "model.max_positions")?,
            vocab_size: get(pairs, "model.vocab_size")?,
            generator_multiplier: get(pairs, "model.generator_multiplier")?,
            dropout: get(pairs, "model.dropout")?,
            attention_dropout: get(pairs, "model.attention_dropout")?,
            layer_norm_eps: get(pairs, "model.layer_norm_eps")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn scaled(name: &str, v: usize, m: f64) -> Result<usize> {
    let x = v as f64 * m;
    let r = x.round();
    if r < 1.0 || (x - r).abs() > 1e-6 {
        return Err(Error::Config(format!("generator {name} {v}×{m} = {x} is not a positive integer")));
    }
    Ok(r as usize)
}

/// Scales hidden size, intermediate size, and head count by `multiplier`;
/// the layer count is unchanged.
pub fn derive_generator_config(disc: &StackConfig, multiplier: f64) -> Result<StackConfig> {
    if !(multiplier > 0.0 && multiplier <= 1.0) {
        return Err(Error::Config(format!("generator multiplier {multiplier} outside (0, 1]")));
    }
    Ok(StackConfig {
        layers: disc.layers,
        hidden: scaled("hidden", disc.hidden, multiplier)?,
        heads: scaled("heads", disc.heads, multiplier)?,
        intermediate: scaled("intermediate", disc.intermediate, multiplier)?,
    })
}
