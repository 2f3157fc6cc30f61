use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::loss::{combine_vars, contrastive_logits, loss_csp, loss_mlm, loss_mts, loss_rtd, LossParts};
use super::optim::{lr_at, Adam, AdamConfig};
use crate::autodiff::{sigmoid, Graph, Real, Var};
use crate::corpus::read_shard_dir;
use crate::corruption::{complete_view, mask_view, rng_for, CorruptionView, MaskedView};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Encoding, Mode, ModelParams, Stack};
use crate::sequence::TokenSequence;
use crate::vocab::Vocab;

// Stream tags mixed into derived seeds.
const DATA: u64 = 1;
const CORRUPT: u64 = 2;
const DROPOUT: u64 = 3;
const INIT: u64 = 4;

/// Counts behind the step accuracies.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub tokens: usize,
    pub rtd_correct: usize,
    pub replaced: usize,
    pub replaced_detected: usize,
    pub masked: usize,
    pub mts_rows: usize,
    pub mts_correct: usize,
    pub csp_anchors: usize,
    pub csp_correct: usize,
}

impl BatchStats {
    pub fn add(&mut self, o: &BatchStats) {
        self.tokens += o.tokens;
        self.rtd_correct += o.rtd_correct;
        self.replaced += o.replaced;
        self.replaced_detected += o.replaced_detected;
        self.masked += o.masked;
        self.mts_rows += o.mts_rows;
        self.mts_correct += o.mts_correct;
        self.csp_anchors += o.csp_anchors;
        self.csp_correct += o.csp_correct;
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            f64::NAN
        } else {
            a as f64 / b as f64
        }
    }

    pub fn rtd_acc(&self) -> f64 {
        Self::ratio(self.rtd_correct, self.tokens)
    }

    /// Share of replaced tokens the discriminator flags as replaced.
    pub fn rtd_recall(&self) -> f64 {
        Self::ratio(self.replaced_detected, self.replaced)
    }

    /// Share of tokens that are replaced; the recall of a predictor that
    /// flags tokens at random with this rate.
    pub fn replaced_rate(&self) -> f64 {
        Self::ratio(self.replaced, self.tokens)
    }

    pub fn mts_acc(&self) -> f64 {
        Self::ratio(self.mts_correct, self.mts_rows)
    }

    pub fn csp_top1(&self) -> f64 {
        Self::ratio(self.csp_correct, self.csp_anchors)
    }
}

/// Loss nodes of one batch. Token-level terms are already divided by the
/// batch size and averaged over the two views; disabled terms are `None`.
pub struct BatchLosses {
    pub mlm: Var,
    pub rtd: Var,
    pub mts: Option<Var>,
    pub csp: Option<Var>,
    pub views: Vec<CorruptionView>,
    pub stats: BatchStats,
}

impl BatchLosses {
    pub fn parts<T: Real>(&self, g: &Graph<'_, T>) -> LossParts {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.value(x).item().as_f64());
        LossParts { mlm: v(Some(self.mlm)), rtd: v(Some(self.rtd)), mts: v(self.mts), csp: v(self.csp) }
    }

    pub fn total<T: Real>(&self, g: &mut Graph<'_, T>, cfg: &TrainConfig) -> Result<Var> {
        let mut terms = vec![(self.mlm, 1.0), (self.rtd, cfg.lambda1)];
        terms.extend(self.mts.map(|v| (v, cfg.lambda2)));
        terms.extend(self.csp.map(|v| (v, cfg.lambda3)));
        combine_vars(g, &terms)
    }

    /// `λ1·L_RTD + λ2·L_MTS + λ3·L_CSP`.
    pub fn discriminator_total<T: Real>(&self, g: &mut Graph<'_, T>, cfg: &TrainConfig) -> Result<Var> {
        let mut terms = vec![(self.rtd, cfg.lambda1)];
        terms.extend(self.mts.map(|v| (v, cfg.lambda2)));
        terms.extend(self.csp.map(|v| (v, cfg.lambda3)));
        combine_vars(g, &terms)
    }
}

fn row_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Builds both corruptions of every sequence, runs the generator and the
/// discriminator, and records the four losses. With `train` set, dropout is
/// active. Randomness is drawn from streams keyed by `(seed, step, ...)`.
pub fn forward_batch<T: Real>(
    model: &ModelParams<T>,
    g: &mut Graph<'_, T>,
    seqs: &[TokenSequence],
    cfg: &TrainConfig,
    step: u64,
    train: bool,
) -> Result<BatchLosses> {
    if seqs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let vocab_size = model.config.vocab_size;
    let b = seqs.len() as f64;
    let mts_on = cfg.lambda2 > 0.0;
    let csp_on = cfg.lambda3 > 0.0;
    let k = if mts_on { cfg.mts_k } else { 0 };

    // view i = 2·seq + v
    let mut rngs = Vec::with_capacity(2 * seqs.len());
    let mut masked: Vec<MaskedView> = Vec::with_capacity(2 * seqs.len());
    for (s, seq) in seqs.iter().enumerate() {
        for v in 0..2u64 {
            let mut rng = rng_for(cfg.seed, &[CORRUPT, step, s as u64, v]);
            masked.push(mask_view(seq, cfg.mask_rate(), vocab_size, &mut rng)?);
            rngs.push(rng);
        }
    }
    let original = |i: usize| &seqs[i / 2];

    let gen_in: Vec<Encoding> = masked.iter().map(|m| Encoding::single(&m.x_masked.ids)).collect();
    let mut gen_rng = rng_for(cfg.seed, &[DROPOUT, step, 0]);
    let mut mode = if train { Mode::Train(&mut gen_rng) } else { Mode::Eval };
    let gen = model.encode(g, &gen_in, Stack::Generator, &mut mode)?;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (i, m) in masked.iter().enumerate() {
        for &t in &m.plan.positions {
            rows.push(gen.row(i, t + 1));
            targets.push(original(i).ids[t] as usize);
        }
    }
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    let mlm_sum = if rows.is_empty() {
        loss_mlm(g, gen.hidden, &[])?
    } else {
        let h = g.gather_rows(gen.hidden, &rows)?;
        let logits = model.mlm_logits(g, h)?;
        let z = g.value(logits);
        for r in 0..z.rows() {
            let row = z.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v.as_f64()));
            let e: Vec<f64> = row.iter().map(|&v| (v.as_f64() - m).exp()).collect();
            let s: f64 = e.iter().sum();
            probs.push(e.into_iter().map(|v| v / s).collect());
        }
        loss_mlm(g, logits, &targets)?
    };
    let mlm = g.scale(mlm_sum, T::from_f64c(0.5 / b))?;

    let mut views = Vec::with_capacity(masked.len());
    let mut cursor = 0;
    for (i, (m, rng)) in masked.into_iter().zip(rngs.iter_mut()).enumerate() {
        let n = m.plan.positions.len();
        let p = &probs[cursor..cursor + n];
        cursor += n;
        views.push(complete_view(m, original(i), p, k, rng)?);
    }

    let disc_in: Vec<Encoding> = views.iter().map(|v| Encoding::single(&v.x_replaced.ids)).collect();
    let mut disc_rng = rng_for(cfg.seed, &[DROPOUT, step, 1]);
    let mut mode = if train { Mode::Train(&mut disc_rng) } else { Mode::Eval };
    let disc = model.encode(g, &disc_in, Stack::Discriminator, &mut mode)?;

    let mut stats = BatchStats::default();
    let mut rtd_rows = Vec::new();
    let mut is_original = Vec::new();
    for (i, v) in views.iter().enumerate() {
        for (t, &flag) in v.replaced_flags.iter().enumerate() {
            rtd_rows.push(disc.row(i, t + 1));
            is_original.push(!flag);
        }
        stats.masked += v.plan.positions.len();
    }
    let h = g.gather_rows(disc.hidden, &rtd_rows)?;
    let z = model.rtd_logits(g, h)?;
    for (&zt, &orig) in g.value(z).data().iter().zip(&is_original) {
        let pred_original = sigmoid(zt).as_f64() >= 0.5;
        stats.tokens += 1;
        stats.rtd_correct += usize::from(pred_original == orig);
        if !orig {
            stats.replaced += 1;
            stats.replaced_detected += usize::from(!pred_original);
        }
    }
    let rtd_sum = loss_rtd(g, z, &is_original)?;
    let rtd = g.scale(rtd_sum, T::from_f64c(0.5 / b))?;

    let mts = if mts_on {
        let mut rows = Vec::new();
        let mut sets = Vec::new();
        let mut targets = Vec::new();
        for (i, v) in views.iter().enumerate() {
            let tgt = v.candidate_targets(original(i));
            for (j, &t) in v.plan.positions.iter().enumerate() {
                if v.replaced_flags[t] {
                    rows.push(disc.row(i, t + 1));
                    sets.push(v.candidates[j].clone());
                    targets.push(tgt[j]);
                }
            }
        }
        let logits = if rows.is_empty() {
            None
        } else {
            let h = g.gather_rows(disc.hidden, &rows)?;
            let z = model.mts_logits(g, h, &sets)?;
            let zv = g.value(z);
            for (r, &t) in targets.iter().enumerate() {
                let row: Vec<f64> = zv.row(r).iter().map(|v| v.as_f64()).collect();
                stats.mts_rows += 1;
                stats.mts_correct += usize::from(row_argmax(&row) == t);
            }
            Some(z)
        };
        let s = loss_mts(g, logits, &targets)?;
        Some(g.scale(s, T::from_f64c(0.5 / b))?)
    } else {
        None
    };

    let csp = if csp_on {
        let u = model.csp_embed(g, &disc)?;
        let l = loss_csp(g, u, cfg.csp_tau)?;
        let logits = contrastive_logits(g, u, cfg.csp_tau)?;
        let lv = g.value(logits);
        for i in 0..lv.rows() {
            let row: Vec<f64> = lv.row(i).iter().map(|v| v.as_f64()).collect();
            stats.csp_anchors += 1;
            stats.csp_correct += usize::from(row_argmax(&row) == (i ^ 1));
        }
        Some(l)
    } else {
        None
    };

    Ok(BatchLosses { mlm, rtd, mts, csp, views, stats })
}

/// One logged training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub parts: LossParts,
    pub total: f64,
    pub stats: BatchStats,
    pub mts_on: bool,
    pub csp_on: bool,
}

pub const METRICS_HEADER: &str = "# loss terms are per-sequence sums divided by the batch size; token-level terms \
average the two corruption views; L_CSP is the mean over all 2B anchors; '-' marks a disabled term\n\
step\tlr\tL_MLM\tL_RTD\tL_MTS\tL_CSP\tL_total\trtd_acc\tmts_acc\tcsp_top1";

impl StepRecord {
    pub fn tsv(&self) -> String {
        let f = |v: f64| format!("{v:.6}");
        let opt = |on: bool, v: f64| if on { f(v) } else { "-".to_string() };
        [
            self.step.to_string(),
            format!("{:.6e}", self.lr),
            f(self.parts.mlm),
            f(self.parts.rtd),
            opt(self.mts_on, self.parts.mts),
            opt(self.csp_on, self.parts.csp),
            f(self.total),
            f(self.stats.rtd_acc()),
            opt(self.mts_on, self.stats.mts_acc()),
            opt(self.csp_on, self.stats.csp_top1()),
        ]
        .join("\t")
    }
}

/// Optimization state: model, Adam moments, and the step counter. All other
/// randomness is derived from `(seed, step)`, so this is enough to resume.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: ModelParams<f32>,
    pub adam: Adam,
    data: Vec<TokenSequence>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, vocab_size: usize, data: Vec<TokenSequence>) -> Result<Self> {
        cfg.validate()?;
        let model =
            ModelParams::init(&cfg.model_config(vocab_size), cfg.init_std, crate::corruption::derive_seed(cfg.seed, &[INIT]))?;
        let adam = Adam::new(&model.store);
        Trainer::assemble(cfg, model, adam, data)
    }

    fn assemble(cfg: TrainConfig, model: ModelParams<f32>, adam: Adam, data: Vec<TokenSequence>) -> Result<Self> {
        if !model.has_generator() {
            return Err(Error::invalid("pre-training needs a generator"));
        }
        let max = cfg.max_sequence_length - 2;
        let data: Vec<TokenSequence> =
            data.into_iter().filter(|s| !s.is_empty()).map(|s| if s.len() > max { s.slice(0..max) } else { s }).collect();
        if data.is_empty() {
            return Err(Error::invalid("no training sequences"));
        }
        let v = model.config.vocab_size as u32;
        if data.iter().flat_map(|s| &s.ids).any(|&id| id >= v) {
            return Err(Error::invalid(format!("token id beyond vocab size {v}")));
        }
        Ok(Trainer { cfg, model, adam, data })
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn data(&self) -> &[TokenSequence] {
        &self.data
    }

    /// Sequences of the batch for 0-based update `step`: consecutive slices
    /// of a fresh seeded permutation per pass over the data.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.data.len() as u64;
        let bs = self.cfg.batch_size as u64;
        let mut out = Vec::with_capacity(bs as usize);
        let mut perm: Option<(u64, Vec<usize>)> = None;
        for j in 0..bs {
            let gidx = step * bs + j;
            let epoch = gidx / n;
            if perm.as_ref().map_or(true, |(e, _)| *e != epoch) {
                let mut p: Vec<usize> = (0..n as usize).collect();
                p.shuffle(&mut rng_for(self.cfg.seed, &[DATA, epoch]));
                perm = Some((epoch, p));
            }
            out.push(perm.as_ref().unwrap().1[(gidx % n) as usize]);
        }
        out
    }

    /// Runs one optimization step and returns its record.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let s = self.adam.step;
        if s >= self.cfg.training_steps {
            return Err(Error::invalid("training already finished"));
        }
        let seqs: Vec<TokenSequence> = self.batch_indices(s).into_iter().map(|i| self.data[i].clone()).collect();
        let lr = lr_at(s + 1, self.cfg.learning_rate, self.cfg.warmup_steps, self.cfg.training_steps)?;
        let (grads, parts, total, stats) = {
            let mut g = Graph::new(&self.model.store);
            let losses = forward_batch(&self.model, &mut g, &seqs, &self.cfg, s, true)?;
            let total = losses.total(&mut g, &self.cfg)?;
            let grads = g.backward(total)?;
            (grads, losses.parts(&g), g.value(total).item() as f64, losses.stats)
        };
        let acfg = AdamConfig {
            beta1: self.cfg.adam_beta1,
            beta2: self.cfg.adam_beta2,
            eps: self.cfg.adam_epsilon,
            weight_decay: self.cfg.weight_decay,
        };
        self.adam.update(&mut self.model.store, &grads, lr, &acfg)?;
        Ok(StepRecord {
            step: s + 1,
            lr,
            parts,
            total,
            stats,
            mts_on: self.cfg.lambda2 > 0.0,
            csp_on: self.cfg.lambda3 > 0.0,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        for (k, v) in self.cfg.to_pairs() {
            ck.config.insert(format!("train.{k}"), v);
        }
        ck.config.insert("state.step".into(), self.adam.step.to_string());
        for (id, p) in self.model.store.iter() {
            ck.arrays.push((format!("adam.m/{}", p.name), self.adam.m[id.index()].clone()));
        }
        for (id, p) in self.model.store.iter() {
            ck.arrays.push((format!("adam.v/{}", p.name), self.adam.v[id.index()].clone()));
        }
        ck
    }

    /// Restores a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, data: Vec<TokenSequence>) -> Result<Self> {
        let cfg = TrainConfig::from_prefixed(&ck.config, "train.")?;
        let step: u64 = ck
            .config
            .get("state.step")
            .ok_or_else(|| Error::Format("checkpoint has no training step".into()))?
            .parse()
            .map_err(|_| Error::Format("bad training step".into()))?;
        let model = ModelParams::from_checkpoint(ck, &["adam."])?;
        let mut adam = Adam::new(&model.store);
        adam.step = step;
        for (id, p) in model.store.iter() {
            for (prefix, slot) in [("adam.m/", &mut adam.m), ("adam.v/", &mut adam.v)] {
                let t = ck
                    .array(&format!("{prefix}{}", p.name))
                    .ok_or_else(|| Error::Format(format!("missing optimizer state for {}", p.name)))?;
                if t.shape() != p.value.shape() {
                    return Err(Error::Format(format!("optimizer state shape mismatch for {}", p.name)));
                }
                slot[id.index()] = t.clone();
            }
        }
        Trainer::assemble(cfg, model, adam, data)
    }
}

/// Held-out evaluation in eval mode with its own corruption stream.
pub fn evaluate(model: &ModelParams<f32>, seqs: &[TokenSequence], cfg: &TrainConfig, seed: u64) -> Result<(LossParts, BatchStats)> {
    let mut stats = BatchStats::default();
    let mut sum = LossParts::default();
    let mut batches = 0.0;
    let mut ecfg = cfg.clone();
    ecfg.seed = seed;
    for (i, chunk) in seqs.chunks(cfg.batch_size.max(2)).enumerate() {
        if chunk.len() < 2 {
            continue;
        }
        let mut g = Graph::new(&model.store);
        let l = forward_batch(model, &mut g, chunk, &ecfg, i as u64, false)?;
        let p = l.parts(&g);
        sum.mlm += p.mlm;
        sum.rtd += p.rtd;
        sum.mts += p.mts;
        sum.csp += p.csp;
        batches += 1.0;
        stats.add(&l.stats);
    }
    if batches > 0.0 {
        sum = LossParts { mlm: sum.mlm / batches, rtd: sum.rtd / batches, mts: sum.mts / batches, csp: sum.csp / batches };
    }
    Ok((sum, stats))
}

/// Outputs of [`run_pretraining`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<StepRecord>,
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
}

pub struct RunOptions<'a> {
    pub resume: Option<&'a Path>,
    /// Stop after this many total steps instead of `training_steps`.
    pub stop_at: Option<u64>,
    pub progress: Option<&'a mut dyn FnMut(&StepRecord)>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions { resume: None, stop_at: None, progress: None }
    }
}

/// Loads shards from `data_dir`, trains, and writes `metrics.tsv`, periodic
/// `step-N.ckpt` files, and `final.ckpt` into `out_dir`.
pub fn run_pretraining(
    cfg: &TrainConfig,
    data_dir: &Path,
    vocab: &Vocab,
    out_dir: &Path,
    mut opts: RunOptions<'_>,
) -> Result<RunSummary> {
    let (meta, data) = read_shard_dir(data_dir)?;
    meta.check_vocab(vocab)?;
    fs::create_dir_all(out_dir)?;
    let mut trainer = match opts.resume {
        Some(p) => Trainer::resume(&Checkpoint::load(p)?, data)?,
        None => Trainer::new(cfg.clone(), vocab.len(), data)?,
    };
    if trainer.model.config.vocab_size != vocab.len() {
        return Err(Error::invalid("checkpoint vocabulary size differs from the vocab file"));
    }
    let metrics_path = out_dir.join("metrics.tsv");
    let fresh = opts.resume.is_none() || !metrics_path.exists();
    let mut log = OpenOptions::new().create(true).write(true).append(!fresh).truncate(fresh).open(&metrics_path)?;
    if fresh {
        writeln!(log, "{METRICS_HEADER}")?;
    }
    let end = opts.stop_at.unwrap_or(trainer.cfg.training_steps).min(trainer.cfg.training_steps);
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    while trainer.step() < end {
        let rec = trainer.train_step()?;
        if rec.step % trainer.cfg.log_interval == 0 || rec.step == end {
            writeln!(log, "{}", rec.tsv())?;
        }
        if let Some(cb) = opts.progress.as_mut() {
            cb(&rec);
        }
        let ci = trainer.cfg.checkpoint_interval;
        if ci > 0 && rec.step % ci == 0 && rec.step != end {
            let p = out_dir.join(format!("step-{}.ckpt", rec.step));
            trainer.checkpoint().save(&p)?;
            checkpoints.push(p);
        }
        records.push(rec);
    }
    log.flush()?;
    let final_checkpoint = out_dir.join("final.ckpt");
    trainer.checkpoint().save(&final_checkpoint)?;
    Ok(RunSummary { records, metrics_path, checkpoints, final_checkpoint })
}
