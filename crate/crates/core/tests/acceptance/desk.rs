//! Desk-scale pre-training: a synthetic ~5MB corpus, an in-domain vocab,
//! a 2-layer hidden-48 model, batch 8, 2000 steps.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use ehdiscrim_core::corpus::{preprocess, Lexicon, PreprocessOptions};
use ehdiscrim_core::pretrain::{run_pretraining, Ablation, BatchStats, RunOptions, RunSummary, StepRecord, TrainConfig};
use ehdiscrim_core::vocab::{train_wordpiece, Vocab};

use crate::common::corpus::SyntheticCorpus;
use crate::Check;

pub const STEPS: u64 = 2000;
/// Steps averaged for every end-of-run metric.
pub const FINAL_WINDOW: usize = 100;
const CORPUS_BYTES: usize = 5_000_000;

pub fn desk_config(steps: u64) -> TrainConfig {
    TrainConfig {
        num_layers: 2,
        hidden_size: 48,
        intermediate_size: 192,
        num_attention_heads: 6,
        embedding_size: 48,
        max_sequence_length: 64,
        batch_size: 8,
        training_steps: steps,
        warmup_steps: steps / 10,
        learning_rate: 3e-3,
        dropout: 0.0,
        attention_dropout: 0.0,
        log_interval: 1,
        checkpoint_interval: 500,
        ..TrainConfig::default()
    }
}

pub struct Prepared {
    pub root: PathBuf,
    pub shards: PathBuf,
    pub vocab: Vocab,
    pub corpus_bytes: usize,
}

static PREPARED: OnceLock<Prepared> = OnceLock::new();
static FULL: OnceLock<(RunSummary, f64)> = OnceLock::new();

/// Corpus, vocabulary, and shards, built once per process.
pub fn prepared() -> &'static Prepared {
    PREPARED.get_or_init(|| {
        let root = std::env::temp_dir().join(format!("ehdiscrim-acceptance-{}", std::process::id()));
        fs::create_dir_all(&root).unwrap();
        // a word-level Markov chain whose most likely successor dominates
        let c = SyntheticCorpus::new(200, 150, 1).with_weights([0.95, 0.03, 0.015, 0.005]);
        let text = c.generate(CORPUS_BYTES, 2);
        let input = root.join("corpus.txt");
        fs::write(&input, &text).unwrap();
        let vocab = train_wordpiece(text.lines(), 1, 2000).unwrap();
        let shards = root.join("shards");
        let opts = PreprocessOptions {
            lexicon: Some(Lexicon::from_words(&c.words)),
            max_len: desk_config(STEPS).max_sequence_length - 2,
            ..Default::default()
        };
        preprocess(&input, &vocab, &shards, &opts).unwrap();
        Prepared { root, shards, vocab, corpus_bytes: text.len() }
    })
}

pub fn cleanup() {
    if let Some(p) = PREPARED.get() {
        let _ = fs::remove_dir_all(&p.root);
    }
}

fn train(cfg: &TrainConfig, out: &Path) -> (RunSummary, f64) {
    let p = prepared();
    let t = Instant::now();
    let mut progress = |r: &StepRecord| {
        if r.step % 500 == 0 {
            eprintln!("    [{}] step {} L_MLM {:.3} ({:.0}s)", out.display(), r.step, r.parts.mlm, t.elapsed().as_secs_f64());
        }
    };
    let opts = RunOptions { progress: Some(&mut progress), ..Default::default() };
    let summary = run_pretraining(cfg, &p.shards, &p.vocab, out, opts).unwrap();
    (summary, t.elapsed().as_secs_f64())
}

fn full_run() -> &'static (RunSummary, f64) {
    FULL.get_or_init(|| train(&desk_config(STEPS), &prepared().root.join("full")))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn run_desk() -> Vec<Check> {
    let p = prepared();
    let cfg = desk_config(STEPS);
    let (summary, secs) = full_run();
    let recs = &summary.records;
    let mut out = vec![Check::new(
        "setup",
        p.vocab.len() <= 2000 && recs.len() as u64 == STEPS && cfg.batch_size == 8,
        format!(
            "corpus {:.1}MB, vocab {}, batch {}, {} steps, hidden {} x {} layers",
            p.corpus_bytes as f64 / 1e6,
            p.vocab.len(),
            cfg.batch_size,
            recs.len(),
            cfg.hidden_size,
            cfg.num_layers
        ),
    )];

    let tail = &recs[recs.len() - FINAL_WINDOW..];
    let start = mean(recs[..10].iter().map(|r| r.parts.mlm));
    let end = mean(tail.iter().map(|r| r.parts.mlm));
    let drop = 1.0 - end / start;
    out.push(Check::new(
        "mlm-decrease",
        drop >= 0.30,
        format!("L_MLM {start:.3} (steps 1-10) -> {end:.3} (last {FINAL_WINDOW}), drop {:.1}% (need >= 30%)", 100.0 * drop),
    ));

    let mut st = BatchStats::default();
    for r in tail {
        st.add(&r.stats);
    }
    out.push(Check::new(
        "mts-accuracy",
        st.mts_acc() > 0.5,
        format!("{:.3} over {} replaced positions in the last {FINAL_WINDOW} steps (need > 0.5, chance 1/6)", st.mts_acc(), st.mts_rows),
    ));
    out.push(Check::new(
        "csp-top1",
        st.csp_top1() > 0.8,
        format!("{:.3} over {} anchors in the last {FINAL_WINDOW} steps (need > 0.8, chance 1/15)", st.csp_top1(), st.csp_anchors),
    ));
    out.push(Check::new(
        "rtd-recall",
        st.rtd_recall() > st.replaced_rate(),
        format!(
            "recall {:.3} vs base-rate predictor {:.3} over {} replaced of {} tokens",
            st.rtd_recall(),
            st.replaced_rate(),
            st.replaced,
            st.tokens
        ),
    ));

    let per500 = secs / (STEPS as f64 / 500.0);
    out.push(Check::new("time-per-500-steps", per500 < 1800.0, format!("{per500:.1}s (limit 1800s), single thread")));

    let (again, _) = train(&cfg, &p.root.join("rerun"));
    let same_metrics = fs::read(&summary.metrics_path).unwrap() == fs::read(&again.metrics_path).unwrap();
    let same_ckpt = fs::read(&summary.final_checkpoint).unwrap() == fs::read(&again.final_checkpoint).unwrap();
    out.push(Check::new(
        "bit-identical-rerun",
        same_metrics && same_ckpt && again.records == summary.records,
        format!("metrics.tsv equal {same_metrics}, final.ckpt equal {same_ckpt}"),
    ));
    out
}

/// Columns of `metrics.tsv` that hold a disabled term.
const MTS_COLS: [usize; 2] = [4, 8];
const CSP_COLS: [usize; 2] = [5, 9];

fn check_log(name: &str, path: &Path, mts_on: bool, csp_on: bool) -> Check {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<&str>> =
        text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("step")).map(|l| l.split('\t').collect()).collect();
    let bad = rows
        .iter()
        .filter(|r| {
            r.len() != 10
                || MTS_COLS.iter().any(|&c| (r[c] == "-") == mts_on)
                || CSP_COLS.iter().any(|&c| (r[c] == "-") == csp_on)
                || [2, 3, 6, 7].iter().any(|&c| r[c].parse::<f64>().is_err())
        })
        .count();
    let absent: Vec<&str> = [(!mts_on).then_some("MTS"), (!csp_on).then_some("CSP")].into_iter().flatten().collect();
    Check::new(
        name,
        bad == 0 && rows.len() as u64 == STEPS,
        format!(
            "{} logged steps, {bad} malformed; absent: {}",
            rows.len(),
            if absent.is_empty() { "none".to_string() } else { absent.join(", ") }
        ),
    )
}

pub fn run_ablations() -> Vec<Check> {
    let mut out = Vec::new();
    for a in [Ablation::Full, Ablation::NoCsp, Ablation::NoMts, Ablation::NoCspMts] {
        let mut cfg = desk_config(STEPS);
        cfg.apply_ablation(a);
        let summary = if a == Ablation::Full {
            full_run().0.clone()
        } else {
            train(&cfg, &prepared().root.join(a.name())).0
        };
        out.push(check_log(a.name(), &summary.metrics_path, cfg.lambda2 > 0.0, cfg.lambda3 > 0.0));
    }
    out
}
