//! Shared inputs for the benchmarks.

use ehdiscrim_core::pretrain::TrainConfig;
use ehdiscrim_core::TokenSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The desk-scale model: 2 layers, hidden 48, 6 heads, batch 8.
pub fn desk_config() -> TrainConfig {
    TrainConfig {
        num_layers: 2,
        hidden_size: 48,
        intermediate_size: 192,
        num_attention_heads: 6,
        embedding_size: 48,
        max_sequence_length: 64,
        batch_size: 8,
        training_steps: 1000,
        warmup_steps: 100,
        dropout: 0.0,
        attention_dropout: 0.0,
        ..TrainConfig::default()
    }
}

pub fn random_sequences(n: usize, len: usize, vocab: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let ids = (0..len).map(|_| rng.gen_range(5..vocab as u32)).collect();
            let ws = (0..len).map(|i| i == 0 || rng.gen_bool(0.6)).collect();
            TokenSequence::new(ids, ws).unwrap()
        })
        .collect()
}

/// Mixed CJK and ASCII clinical-style text.
pub fn sample_text(lines: usize) -> String {
    let base = "患者女性，65岁，ECOG评分1分。胸部增强CT及头颅MRI未见明显异常，免疫组化IHC测定TSHR阳性。";
    (0..lines).map(|i| format!("{base}第{i}次随访HIV/AIDS阴性\n")).collect()
}
