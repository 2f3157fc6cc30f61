use ehdiscrim_core::model::{ModelConfig, ModelParams};
use ehdiscrim_core::pretrain::TrainConfig;
use ehdiscrim_core::TokenSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TOY_VOCAB: usize = 40;

/// 2 layers, hidden 24, 6 heads; the one-third generator has hidden 8 with
/// 2 heads.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        num_layers: 2,
        hidden_size: 24,
        intermediate_size: 48,
        num_attention_heads: 6,
        embedding_size: 24,
        max_sequence_length: 16,
        batch_size: 3,
        training_steps: 30,
        warmup_steps: 5,
        learning_rate: 1e-3,
        log_interval: 1,
        ..TrainConfig::default()
    }
}

pub fn toy_model_config() -> ModelConfig {
    toy_train_config().model_config(TOY_VOCAB)
}

/// Toy model with every parameter, biases and gains included, drawn at
/// random so no term of the forward pass is trivially zero or one.
pub fn toy_model(seed: u64, std: f64) -> ModelParams<f64> {
    let mut m = ModelParams::<f64>::init(&toy_model_config(), std, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let normal = Normal::new(0.0, std).unwrap();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let gain = m.store.get(id).name.ends_with(".gain");
        for v in m.store.value_mut(id).data_mut() {
            *v = if gain { 1.0 } else { 0.0 } + normal.sample(&mut rng);
        }
    }
    m
}

/// Sequences of regular tokens with random word boundaries.
pub fn toy_sequences(n: usize, len: std::ops::RangeInclusive<usize>, vocab: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let l = rng.gen_range(len.clone());
            let ids = (0..l).map(|_| rng.gen_range(5..vocab as u32)).collect();
            let mut ws: Vec<bool> = (0..l).map(|_| rng.gen_bool(0.6)).collect();
            ws[0] = true;
            TokenSequence::new(ids, ws).unwrap()
        })
        .collect()
}
