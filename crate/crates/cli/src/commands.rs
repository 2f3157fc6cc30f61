use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use ehdiscrim_core::corpus::{preprocess as run_preprocess, read_documents, Lexicon, PreprocessOptions};
use ehdiscrim_core::finetune::{
    read_jsonl, resolve_labels, score, write_jsonl, FinetuneConfig, RelationSchema, Task, TaskKind, TaskModel,
};
use ehdiscrim_core::model::{Checkpoint, ModelParams};
use ehdiscrim_core::pretrain::{run_pretraining, Ablation, RunOptions, TrainConfig};
use ehdiscrim_core::vocab::{display_pieces, tokenize as tokenize_text, train_wordpiece, Vocab};
use log::{info, warn};

use crate::manifest::RunManifest;
use crate::{BuildVocabArgs, EvalArgs, FinetuneArgs, PreprocessArgs, PretrainArgs, TokenizeArgs};

pub struct Ctx {
    pub seed: Option<u64>,
    pub threads: usize,
}

fn load_vocab(path: &std::path::Path) -> Result<Vocab> {
    Vocab::load(path).with_context(|| format!("loading vocab {}", path.display()))
}

pub fn build_vocab(_ctx: &Ctx, a: &BuildVocabArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    m.input("corpus", &a.input)?;
    m.config_pairs([
        ("size".into(), a.size.to_string()),
        ("min_count".into(), a.min_count.to_string()),
        ("layout".into(), format!("{:?}", a.layout).to_lowercase()),
    ]);
    m.output(&a.output);
    m.begin(manifest)?;
    let docs = read_documents(&a.input, a.layout.into())?;
    info!("read {} documents", docs.len());
    let vocab = train_wordpiece(docs.iter().map(|d| d.text.as_str()), a.min_count, a.size)?;
    vocab.save(&a.output)?;
    info!("wrote {} tokens to {}", vocab.len(), a.output.display());
    Ok(())
}

pub fn tokenize(_ctx: &Ctx, a: &TokenizeArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    m.input("vocab", &a.vocab)?;
    m.begin(manifest)?;
    let vocab = load_vocab(&a.vocab)?;
    let mut out = std::io::stdout().lock();
    match &a.text {
        Some(t) => writeln!(out, "{}", display_pieces(&tokenize_text(t, &vocab), &vocab))?,
        None => {
            for line in std::io::stdin().lock().lines() {
                let line = line?;
                writeln!(out, "{}", display_pieces(&tokenize_text(&line, &vocab), &vocab))?;
            }
        }
    }
    Ok(())
}

pub fn preprocess(ctx: &Ctx, a: &PreprocessArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    m.input("corpus", &a.input)?;
    m.input("vocab", &a.vocab)?;
    if let Some(l) = &a.lexicon {
        m.input("lexicon", l)?;
    }
    m.config_pairs([
        ("max_len".into(), a.max_len.to_string()),
        ("min_len".into(), a.min_len.to_string()),
        ("shard_size".into(), a.shard_size.to_string()),
        ("layout".into(), format!("{:?}", a.layout).to_lowercase()),
    ]);
    m.output(&a.output);
    m.begin(manifest)?;
    let vocab = load_vocab(&a.vocab)?;
    let opts = PreprocessOptions {
        layout: a.layout.into(),
        max_len: a.max_len,
        min_len: a.min_len,
        lexicon: a.lexicon.as_ref().map(Lexicon::load).transpose()?,
        sequences_per_shard: a.shard_size,
        threads: ctx.threads,
    };
    let s = run_preprocess(&a.input, &vocab, &a.output, &opts)?;
    info!(
        "{} documents read, {} kept, {} sequences ({} tokens) in {} shards",
        s.documents_read, s.documents_kept, s.sequences, s.tokens, s.shards
    );
    Ok(())
}

pub fn pretrain(ctx: &Ctx, a: &PretrainArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(ab) = &a.ablation {
        cfg.apply_ablation(Ablation::parse(ab)?);
    }
    if a.resume.is_some() && (a.config.is_some() || a.ablation.is_some() || ctx.seed.is_some()) {
        warn!("resuming: settings come from the checkpoint; --config, --ablation, and --seed are ignored");
    }
    m.input("data", &a.data)?;
    m.input("vocab", &a.vocab)?;
    if let Some(r) = &a.resume {
        m.input("resume", r)?;
    }
    m.config_pairs(cfg.to_pairs());
    m.seed = Some(cfg.seed);
    m.output(&a.output);
    m.begin(manifest)?;
    let vocab = load_vocab(&a.vocab)?;
    let mut progress = |r: &ehdiscrim_core::pretrain::StepRecord| {
        if r.step % cfg.log_interval.max(1) == 0 {
            info!("{}", r.tsv().replace('\t', " "));
        }
    };
    let opts = RunOptions { resume: a.resume.as_deref(), stop_at: a.stop_at, progress: Some(&mut progress) };
    let summary = run_pretraining(&cfg, &a.data, &vocab, &a.output, opts)?;
    info!("wrote {} and {}", summary.metrics_path.display(), summary.final_checkpoint.display());
    Ok(())
}

fn write_text(path: &std::path::Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn finetune(ctx: &Ctx, a: &FinetuneArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    let task = Task::parse(&a.task)?;
    let mut cfg = match &a.config {
        Some(p) => FinetuneConfig::load(task, p).with_context(|| format!("config {}", p.display()))?,
        None => FinetuneConfig::for_task(task),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if a.schema.is_some() {
        cfg.schema = a.schema.clone();
    }
    if a.terminology.is_some() {
        cfg.terminology = a.terminology.clone();
    }
    m.input("train", &a.train)?;
    if let Some(d) = &a.dev {
        m.input("dev", d)?;
    }
    m.input("checkpoint", &a.checkpoint)?;
    m.input("vocab", &a.vocab)?;
    for (label, p) in [("schema", &cfg.schema), ("terminology", &cfg.terminology)] {
        if let Some(p) = p {
            m.input(label, p)?;
        }
    }
    m.config_pairs(cfg.to_pairs());
    m.seed = Some(cfg.seed);
    m.output(&a.output);
    m.begin(manifest)?;

    let vocab = load_vocab(&a.vocab)?;
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let base = ModelParams::from_checkpoint(&ck, &["adam.", "head."])?;
    ensure!(
        base.config.vocab_size == vocab.len(),
        "checkpoint vocabulary has {} tokens, vocab file {}",
        base.config.vocab_size,
        vocab.len()
    );
    let schema = match (task.kind(), &cfg.schema) {
        (TaskKind::Relation, Some(p)) => Some(RelationSchema::load(p)?),
        (TaskKind::Relation, None) => bail!("task {} needs --schema", task.name()),
        _ => None,
    };
    if task.kind() == TaskKind::Normalization && cfg.terminology.is_none() {
        bail!("task {} needs --terminology", task.name());
    }
    let train = read_jsonl(&a.train)?;
    let dev = a.dev.as_ref().map(read_jsonl).transpose()?;
    let labels = resolve_labels(&cfg, &train)?;
    let mut model = TaskModel::new(&base, cfg, labels, schema)?;
    let inst = model.prepare_all(&train, &vocab, true)?;
    info!("{} training records, {} instances", train.len(), inst.len());

    fs::create_dir_all(&a.output)?;
    let metric = task.metric().name();
    let log = model.finetune(&inst, dev.as_deref().map(|d| (d, &vocab)), |e| match e.dev_metric {
        Some(v) => info!("epoch {} step {} loss {:.6} dev {metric} {v:.4}", e.epoch, e.steps, e.mean_loss),
        None => info!("epoch {} step {} loss {:.6}", e.epoch, e.steps, e.mean_loss),
    })?;
    let mut tsv = format!("epoch\tstep\tloss\tdev_{metric}\n");
    for e in &log {
        let dev = e.dev_metric.map_or("-".to_string(), |v| format!("{v:.6}"));
        tsv.push_str(&format!("{}\t{}\t{:.6}\t{dev}\n", e.epoch, e.steps, e.mean_loss));
    }
    let epochs = a.output.join("epochs.tsv");
    write_text(&epochs, &tsv)?;
    let conf = a.output.join("finetune.conf");
    write_text(&conf, &model.cfg.to_text())?;
    let out_ck = a.output.join("model.ckpt");
    model.to_checkpoint()?.save(&out_ck)?;
    for p in [&epochs, &conf, &out_ck] {
        m.output(p);
    }
    if let Some(d) = &dev {
        let pred = model.predict(d, &vocab)?;
        let p = a.output.join("dev.pred.jsonl");
        write_jsonl(&p, &pred)?;
        m.output(&p);
        let v = score(task, &pred, d)?;
        println!("{metric}\t{v:.6}");
    }
    Ok(())
}

pub fn eval(_ctx: &Ctx, a: &EvalArgs, m: &mut RunManifest, manifest: Option<PathBuf>) -> Result<()> {
    let task = Task::parse(&a.task)?;
    m.input("gold", &a.gold)?;
    for (label, p) in [("pred", &a.pred), ("checkpoint", &a.checkpoint), ("vocab", &a.vocab)] {
        if let Some(p) = p {
            m.input(label, p)?;
        }
    }
    if let Some(o) = &a.output {
        m.output(o);
    }
    m.begin(manifest)?;
    let gold = read_jsonl(&a.gold)?;
    let pred = match (&a.pred, &a.checkpoint) {
        (Some(p), _) => read_jsonl(p)?,
        (None, Some(c)) => {
            let model = TaskModel::from_checkpoint(&Checkpoint::load(c)?)?;
            ensure!(model.cfg.task == task, "checkpoint was fine-tuned for {}, not {}", model.cfg.task.name(), task.name());
            let vocab = load_vocab(a.vocab.as_ref().expect("clap enforces --vocab"))?;
            ensure!(model.params.config.vocab_size == vocab.len(), "checkpoint and vocab sizes differ");
            let pred = model.predict(&gold, &vocab)?;
            if let Some(o) = &a.output {
                write_jsonl(o, &pred)?;
            }
            pred
        }
        (None, None) => bail!("need --pred or --checkpoint"),
    };
    let v = score(task, &pred, &gold)?;
    println!("{}\t{v:.6}", task.metric().name());
    Ok(())
}
