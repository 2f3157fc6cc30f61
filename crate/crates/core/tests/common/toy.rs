//! Synthetic fine-tuning tasks that a linear probe on token identity
//! separates, with a small randomly initialized encoder.

use ehdiscrim_core::finetune::{
    resolve_labels, EntitySpan, EpochRecord, FinetuneConfig, Record, RelationSchema, RelationType, Task, TaskModel,
    TripleRecord,
};
use ehdiscrim_core::model::{ModelConfig, ModelParams};
use ehdiscrim_core::vocab::Vocab;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FILLER: usize = 12;

fn w(group: &str, i: usize) -> String {
    format!("{group}{}", (b'a' + i as u8) as char)
}

pub fn toy_vocab() -> Vocab {
    let mut toks = Vec::new();
    for g in ["f", "s", "d", "m", "c", "p", "n"] {
        for i in 0..FILLER {
            toks.push(w(g, i));
        }
    }
    Vocab::with_tokens(toks).unwrap()
}

pub fn toy_encoder(vocab: &Vocab) -> ModelParams<f32> {
    let cfg = ModelConfig {
        layers: 2,
        hidden: 24,
        heads: 2,
        intermediate: 48,
        embedding_size: 24,
        max_positions: 40,
        vocab_size: vocab.len(),
        generator_multiplier: 0.5,
        dropout: 0.1,
        attention_dropout: 0.1,
        layer_norm_eps: 1e-12,
    };
    ModelParams::init(&cfg, 0.02, 7).unwrap()
}

fn filler(rng: &mut ChaCha8Rng, len: std::ops::Range<usize>) -> Vec<String> {
    let n = rng.gen_range(len);
    (0..n).map(|_| w("f", rng.gen_range(0..FILLER))).collect()
}

fn rec() -> Record {
    Record::default()
}

/// Symptom words `s*` are single-token symptom entities; `d* m*` bigrams
/// are two-token disease entities.
fn tagging(rng: &mut ChaCha8Rng) -> Record {
    let mut words = filler(rng, 6..10);
    let mut spans = Vec::new();
    let sym_at = rng.gen_range(0..3);
    words.insert(sym_at, w("s", rng.gen_range(0..FILLER)));
    spans.push(EntitySpan::new(sym_at, sym_at, "sym"));
    if rng.gen_bool(0.7) {
        let at = rng.gen_range(sym_at + 2..words.len());
        words.insert(at, w("d", rng.gen_range(0..FILLER)));
        words.insert(at + 1, w("m", rng.gen_range(0..FILLER)));
        spans.push(EntitySpan::new(at, at + 1, "dis"));
    }
    spans.sort();
    Record { text: Some(words.join(" ")), entities: Some(spans), ..rec() }
}

pub fn toy_schema() -> RelationSchema {
    let rel = |name: &str, o: &str| RelationType { name: name.into(), subject_type: "dis".into(), object_type: o.into() };
    RelationSchema {
        entity_types: vec!["dis".into(), "sym".into(), "dru".into()],
        relations: vec![rel("has_symptom", "sym"), rel("treated_by", "dru")],
    }
}

/// One disease word `d*`, plus a symptom word `s*` and/or drug word `c*`,
/// each related to the disease.
fn relation(rng: &mut ChaCha8Rng) -> Record {
    let n = rng.gen_range(5..9);
    let mut words = filler(rng, n..n + 1);
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    let which = rng.gen_range(0..3);
    let (ds, rest) = (slots[0], &slots[1..]);
    words[ds] = w("d", rng.gen_range(0..FILLER));
    let mut spans = vec![EntitySpan::new(ds, ds, "dis")];
    let mut triples = Vec::new();
    for (k, (grp, ty, r)) in [("s", "sym", "has_symptom"), ("c", "dru", "treated_by")].into_iter().enumerate() {
        if which == 2 || which == k {
            let at = rest[k];
            words[at] = w(grp, rng.gen_range(0..FILLER));
            spans.push(EntitySpan::new(at, at, ty));
            triples.push(TripleRecord { subject: ds, object: at, relation: r.into() });
        }
    }
    spans.sort();
    Record { text: Some(words.join(" ")), entities: Some(spans), triples: Some(triples), ..rec() }
}

/// Class given by which marker group (`s`, `d`, `c`) appears.
fn single(rng: &mut ChaCha8Rng) -> Record {
    let mut words = filler(rng, 4..9);
    let k = rng.gen_range(0..3);
    let at = rng.gen_range(0..=words.len());
    words.insert(at, w(["s", "d", "c"][k], rng.gen_range(0..FILLER)));
    Record { text: Some(words.join(" ")), label: Some(["a", "b", "c"][k].into()), ..rec() }
}

/// Label `1` when the second text carries a `p*` word, `0` for `n*`.
fn pair(rng: &mut ChaCha8Rng) -> Record {
    let a = filler(rng, 3..7);
    let mut b = filler(rng, 3..7);
    let pos = rng.gen_bool(0.5);
    let at = rng.gen_range(0..=b.len());
    b.insert(at, w(if pos { "p" } else { "n" }, rng.gen_range(0..FILLER)));
    Record {
        text: Some(a.join(" ")),
        text2: Some(b.join(" ")),
        label: Some(if pos { "1" } else { "0" }.into()),
        ..rec()
    }
}

/// The correct candidate contains a `p*` word, distractors an `n*` word.
fn choice(rng: &mut ChaCha8Rng) -> Record {
    let answer = rng.gen_range(0..5);
    let candidates = (0..5)
        .map(|k| {
            let mut c = filler(rng, 2..3);
            c.insert(rng.gen_range(0..3), w(if k == answer { "p" } else { "n" }, rng.gen_range(0..FILLER)));
            c.join(" ")
        })
        .collect();
    Record {
        question: Some(filler(rng, 4..5).join(" ")),
        evidence: Some(filler(rng, 6..7).join(" ")),
        candidates: Some(candidates),
        answer: Some(answer),
        ..rec()
    }
}

pub struct ToyTask {
    pub task: Task,
    pub cfg: FinetuneConfig,
    pub train: Vec<Record>,
    pub test: Vec<Record>,
    pub schema: Option<RelationSchema>,
}

/// Task, config (epochs inside the tuning range), and data. Learning
/// rates are raised for the small random encoder.
pub fn toy_task(task: Task, seed: u64) -> ToyTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gen, n_train, epochs, batch, lr): (fn(&mut ChaCha8Rng) -> Record, usize, usize, usize, f64) = match task {
        Task::Cmeee => (tagging, 256, 12, 32, 3e-3),
        Task::Cmeie => (relation, 120, 100, 12, 2e-3),
        Task::KuakeQic => (single, 240, 16, 16, 2e-3),
        Task::KuakeQqr => (pair, 240, 16, 16, 2e-3),
        Task::Nlpec => (choice, 160, 40, 32, 2e-3),
        _ => panic!("no toy task for {task:?}"),
    };
    assert!(task.ranges().epochs.contains(&epochs));
    let data: Vec<Record> = (0..n_train + 100).map(|_| gen(&mut rng)).collect();
    let mut cfg = FinetuneConfig::for_task(task);
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.max_seq_length = 40;
    cfg.seed = seed;
    let schema = (task == Task::Cmeie).then(toy_schema);
    ToyTask { task, cfg, train: data[..n_train].to_vec(), test: data[n_train..].to_vec(), schema }
}

/// Fine-tunes and returns the held-out metric.
pub fn run_toy(t: &ToyTask) -> (f64, Vec<EpochRecord>) {
    let vocab = toy_vocab();
    let base = toy_encoder(&vocab);
    let labels = resolve_labels(&t.cfg, &t.train).unwrap();
    let mut m = TaskModel::new(&base, t.cfg.clone(), labels, t.schema.clone()).unwrap();
    let inst = m.prepare_all(&t.train, &vocab, true).unwrap();
    let log = m.finetune(&inst, None, |_| {}).unwrap();
    (m.evaluate(&t.test, &vocab).unwrap(), log)
}

pub const TOY_TASKS: [Task; 5] = [Task::Cmeee, Task::Cmeie, Task::KuakeQic, Task::KuakeQqr, Task::Nlpec];
