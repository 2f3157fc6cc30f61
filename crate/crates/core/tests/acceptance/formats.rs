use std::fs;
use std::path::Path;

use ehdiscrim_core::corpus::{read_shard, vocab_digest, write_shard, ShardMeta};
use ehdiscrim_core::model::{read_checkpoint, write_checkpoint, Checkpoint};
use ehdiscrim_core::pretrain::{run_pretraining, RunOptions, Trainer};
use ehdiscrim_core::vocab::Vocab;
use ehdiscrim_core::TokenSequence;

use crate::fixtures::{toy_sequences, toy_train_config, TOY_VOCAB};
use crate::Check;

fn checkpoint_round_trip() -> Check {
    let cfg = toy_train_config();
    let mut tr = Trainer::new(cfg, TOY_VOCAB, toy_sequences(12, 8..=14, TOY_VOCAB, 1)).unwrap();
    for _ in 0..3 {
        tr.train_step().unwrap();
    }
    let ck = tr.checkpoint();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &ck).unwrap();
    let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back).unwrap();
    let bits_equal = ck.arrays.len() == back.arrays.len()
        && ck.arrays.iter().zip(&back.arrays).all(|((n1, a), (n2, b))| {
            n1 == n2 && a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    Check::new(
        "checkpoint",
        bits_equal && back.config == ck.config && bytes == again,
        format!("{} arrays, {} bytes, values and re-encoding bit-identical", ck.arrays.len(), bytes.len()),
    )
}

fn shard_round_trip() -> Check {
    let mut seqs = toy_sequences(200, 1..=70, 30_000, 2);
    seqs.push(TokenSequence::new(vec![u32::MAX - 1], vec![true]).unwrap());
    let mut bytes = Vec::new();
    write_shard(&mut bytes, &seqs).unwrap();
    let back = read_shard(&mut bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_shard(&mut again, &back).unwrap();
    Check::new(
        "shard",
        back == seqs && bytes == again,
        format!("{} sequences, {} bytes", seqs.len(), bytes.len()),
    )
}

fn write_toy_shards(dir: &Path) -> Vocab {
    let vocab = Vocab::with_tokens((5..TOY_VOCAB).map(|i| format!("t{i}"))).unwrap();
    let shard_dir = dir.join("shards");
    fs::create_dir_all(&shard_dir).unwrap();
    let seqs = toy_sequences(20, 8..=14, TOY_VOCAB, 3);
    let mut f = fs::File::create(shard_dir.join("shard-00000.bin")).unwrap();
    write_shard(&mut f, &seqs).unwrap();
    let meta = ShardMeta { vocab_size: vocab.len(), vocab_sha256: vocab_digest(&vocab), sequences: seqs.len(), shards: 1 };
    fs::write(shard_dir.join("shards.meta"), meta.to_text()).unwrap();
    vocab
}

fn resume_matches() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let vocab = write_toy_shards(dir.path());
    let data = dir.path().join("shards");
    let cfg = toy_train_config();
    let total = cfg.training_steps;

    let full = run_pretraining(&cfg, &data, &vocab, &dir.path().join("full"), RunOptions::default()).unwrap();
    let half = total / 2;
    let split_dir = dir.path().join("split");
    let first = run_pretraining(&cfg, &data, &vocab, &split_dir, RunOptions { stop_at: Some(half), ..Default::default() }).unwrap();
    let resumed =
        run_pretraining(&cfg, &data, &vocab, &split_dir, RunOptions { resume: Some(&first.final_checkpoint), ..Default::default() })
            .unwrap();

    let records: Vec<_> = first.records.iter().chain(&resumed.records).cloned().collect();
    let same_records = records == full.records;
    let same_metrics = fs::read(&full.metrics_path).unwrap() == fs::read(&resumed.metrics_path).unwrap();
    let same_ckpt = fs::read(&full.final_checkpoint).unwrap() == fs::read(&resumed.final_checkpoint).unwrap();
    let reloaded = Checkpoint::load(&resumed.final_checkpoint).is_ok();
    Check::new(
        "resume",
        same_records && same_metrics && same_ckpt && reloaded && records.len() as u64 == total,
        format!(
            "{total} steps vs {half}+{}: records equal {same_records}, metrics.tsv equal {same_metrics}, final checkpoint equal {same_ckpt}",
            resumed.records.len()
        ),
    )
}

pub fn run() -> Vec<Check> {
    vec![checkpoint_round_trip(), shard_round_trip(), resume_matches()]
}
