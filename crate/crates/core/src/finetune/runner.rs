//! Task models: the discriminator encoder plus one task head, input
//! preparation from records, the fine-tuning loop, and prediction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::classify::{cdn_candidates, choose, pack_choice, pack_pair};
use super::config::{FinetuneConfig, Task, TaskKind};
use super::data::{score, Record, TripleRecord, POSITIVE_LABEL};
use super::ema::Ema;
use super::mhs::{cell_labels, decode_pointers, mhs_decode, mhs_forward, mhs_loss, pointer_labels, MhsHead, MhsProbs, RelationSchema, RelationTriple};
use super::tags::{mean_cross_entropy, tagging_loss, Stream, TagScheme};
use crate::autodiff::{sigmoid, Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::corruption::{derive_seed, rng_for};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Encoding, Mode, ModelParams, Stack};
use crate::pretrain::{lr_at, Adam, AdamConfig};
use crate::vocab::{tokenize, Vocab};

const HEAD_INIT: u64 = 11;
const FT_ORDER: u64 = 12;
const FT_DROPOUT: u64 = 13;

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Tagging { a_w: ParamId, a_b: ParamId, b_w: ParamId, b_b: ParamId },
    Relation(MhsHead),
    /// Softmax over `labels` from the `[CLS]` state.
    Classifier { w: ParamId, b: ParamId },
    /// One sigmoid logit per packed candidate.
    Binary { w: ParamId, b: ParamId },
}

/// Supervision for one prepared instance.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Tags(Vec<usize>, Vec<usize>),
    Relation { start: Vec<f64>, end: Vec<f64>, cells: Vec<f64> },
    Class(usize),
    Choice(usize),
}

/// Encoder inputs of one instance: one sequence, or one per candidate for
/// multiple choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub inputs: Vec<Encoding>,
    pub target: Option<Target>,
}

/// Per-instance model outputs.
#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Tags(Vec<usize>, Vec<usize>),
    Relation(MhsProbs),
    Class(Vec<f64>),
    Choice(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub mean_loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TaskModel {
    pub cfg: FinetuneConfig,
    pub params: ModelParams<f32>,
    pub head: Head,
    pub labels: Vec<String>,
    pub scheme: TagScheme,
    pub schema: Option<RelationSchema>,
    pub terminology: Option<Vec<String>>,
}

struct HeadInit<'a> {
    store: &'a mut ParamStore<f32>,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl HeadInit<'_> {
    fn weight(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let n = shape.iter().product();
        let v = (0..n).map(|_| self.normal.sample(&mut self.rng) as f32).collect();
        self.store.insert(name, Tensor::new(shape.to_vec(), v)?, true)
    }

    fn bias(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.insert(name, Tensor::zeros(shape), false)
    }
}

fn lookup(store: &ParamStore<f32>, name: &str) -> Result<ParamId> {
    store.id(name).ok_or_else(|| Error::Format(format!("checkpoint lacks head parameter {name}")))
}

/// Class labels from the config, or else the sorted distinct training
/// labels.
pub fn resolve_labels(cfg: &FinetuneConfig, train: &[Record]) -> Result<Vec<String>> {
    match cfg.task.kind() {
        TaskKind::Normalization | TaskKind::Choice => Ok(vec!["0".into(), POSITIVE_LABEL.into()]),
        TaskKind::Single | TaskKind::Pair => {
            let labels = match &cfg.labels {
                Some(l) => l.clone(),
                None => train.iter().filter_map(|r| r.label.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
            };
            if labels.len() < 2 {
                return Err(Error::Config(format!("need at least two class labels, found {labels:?}")));
            }
            Ok(labels)
        }
        TaskKind::Tagging | TaskKind::Relation => Ok(Vec::new()),
    }
}

impl TaskModel {
    /// Adds a freshly initialized head for `cfg.task` to an encoder. A
    /// generator, if present, is dropped.
    pub fn new(base: &ModelParams<f32>, cfg: FinetuneConfig, labels: Vec<String>, schema: Option<RelationSchema>) -> Result<Self> {
        cfg.validate()?;
        let mut params = if base.has_generator() { base.discard_generator()? } else { base.clone() };
        params.config.dropout = cfg.dropout;
        params.config.attention_dropout = cfg.attention_dropout;
        let scheme = TagScheme::new(&cfg.symptom_type, &cfg.other_types)?;
        let h = params.config.hidden;
        let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut init = HeadInit {
            store: &mut params.store,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[HEAD_INIT])),
            normal,
        };
        let head = match cfg.task.kind() {
            TaskKind::Tagging => Head::Tagging {
                a_w: init.weight("head.tag_a.weight", &[h, scheme.num_labels(Stream::A)])?,
                a_b: init.bias("head.tag_a.bias", &[scheme.num_labels(Stream::A)])?,
                b_w: init.weight("head.tag_b.weight", &[h, scheme.num_labels(Stream::B)])?,
                b_b: init.bias("head.tag_b.bias", &[scheme.num_labels(Stream::B)])?,
            },
            TaskKind::Relation => {
                let s = schema.as_ref().ok_or_else(|| Error::Config("relation extraction needs a schema".into()))?;
                s.validate()?;
                let (t, r) = (s.entity_types.len(), s.relations.len());
                Head::Relation(MhsHead {
                    start_w: init.weight("head.start.weight", &[h, t])?,
                    start_b: init.bias("head.start.bias", &[t])?,
                    end_w: init.weight("head.end.weight", &[h, t])?,
                    end_b: init.bias("head.end.bias", &[t])?,
                    u: init.weight("head.mhs.u.weight", &[h, r * h])?,
                    sub_w: init.weight("head.mhs.sub.weight", &[h, r])?,
                    obj_w: init.weight("head.mhs.obj.weight", &[h, r])?,
                    rel_b: init.bias("head.mhs.bias", &[r])?,
                    hidden: h,
                    types: t,
                    relations: r,
                })
            }
            TaskKind::Single | TaskKind::Pair | TaskKind::Normalization => {
                if labels.len() < 2 {
                    return Err(Error::Config("classifier needs at least two labels".into()));
                }
                Head::Classifier {
                    w: init.weight("head.cls.weight", &[h, labels.len()])?,
                    b: init.bias("head.cls.bias", &[labels.len()])?,
                }
            }
            TaskKind::Choice => Head::Binary { w: init.weight("head.cls.weight", &[h, 1])?, b: init.bias("head.cls.bias", &[1])? },
        };
        let terminology = match (&cfg.terminology, cfg.task.kind()) {
            (Some(p), TaskKind::Normalization) => Some(read_terminology(p)?),
            _ => None,
        };
        Ok(TaskModel { cfg, params, head, labels, scheme, schema, terminology })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = self.params.to_checkpoint();
        ck.config.insert("task.name".into(), self.cfg.task.name().into());
        ck.config.insert("task.labels".into(), serde_json::to_string(&self.labels)?);
        if let Some(s) = &self.schema {
            ck.config.insert("task.schema".into(), serde_json::to_string(s)?);
        }
        for (k, v) in self.cfg.to_pairs() {
            ck.config.insert(format!("finetune.{k}"), v);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let name = ck.config.get("task.name").ok_or_else(|| Error::Format("not a fine-tuned checkpoint".into()))?;
        let task = Task::parse(name)?;
        let cfg = FinetuneConfig::from_prefixed(task, &ck.config, "finetune.")?;
        let labels: Vec<String> = serde_json::from_str(ck.config.get("task.labels").map_or("[]", String::as_str))?;
        let schema: Option<RelationSchema> = ck.config.get("task.schema").map(|s| serde_json::from_str(s)).transpose()?;
        let params = ModelParams::from_checkpoint(ck, &["adam."])?;
        let scheme = TagScheme::new(&cfg.symptom_type, &cfg.other_types)?;
        let s = &params.store;
        let head = match task.kind() {
            TaskKind::Tagging => Head::Tagging {
                a_w: lookup(s, "head.tag_a.weight")?,
                a_b: lookup(s, "head.tag_a.bias")?,
                b_w: lookup(s, "head.tag_b.weight")?,
                b_b: lookup(s, "head.tag_b.bias")?,
            },
            TaskKind::Relation => {
                let sc = schema.as_ref().ok_or_else(|| Error::Format("checkpoint lacks the relation schema".into()))?;
                Head::Relation(MhsHead {
                    start_w: lookup(s, "head.start.weight")?,
                    start_b: lookup(s, "head.start.bias")?,
                    end_w: lookup(s, "head.end.weight")?,
                    end_b: lookup(s, "head.end.bias")?,
                    u: lookup(s, "head.mhs.u.weight")?,
                    sub_w: lookup(s, "head.mhs.sub.weight")?,
                    obj_w: lookup(s, "head.mhs.obj.weight")?,
                    rel_b: lookup(s, "head.mhs.bias")?,
                    hidden: params.config.hidden,
                    types: sc.entity_types.len(),
                    relations: sc.relations.len(),
                })
            }
            TaskKind::Choice => Head::Binary { w: lookup(s, "head.cls.weight")?, b: lookup(s, "head.cls.bias")? },
            _ => Head::Classifier { w: lookup(s, "head.cls.weight")?, b: lookup(s, "head.cls.bias")? },
        };
        let terminology = match (&cfg.terminology, task.kind()) {
            (Some(p), TaskKind::Normalization) => Some(read_terminology(p)?),
            _ => None,
        };
        Ok(TaskModel { cfg, params, head, labels, scheme, schema, terminology })
    }

    fn max_len(&self) -> usize {
        self.cfg.max_seq_length.min(self.params.config.max_positions)
    }

    fn content_ids(&self, text: &str, vocab: &Vocab) -> Vec<u32> {
        let mut ids = tokenize(text, vocab).ids;
        ids.truncate(self.max_len() - 2);
        ids
    }

    fn label_index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::invalid(format!("label {label:?} not in {:?}", self.labels)))
    }

    fn term_candidates(&self, text: &str) -> Result<Vec<String>> {
        let terms = self.terminology.as_ref().ok_or_else(|| Error::Config("normalization needs a terminology file".into()))?;
        Ok(cdn_candidates(text, terms, self.cfg.cdn_top_n)?.into_iter().map(|(t, _)| t).collect())
    }

    /// Instances of one record. Normalization expands a record into one
    /// pair per retrieved candidate; during training, gold terms missing
    /// from the retrieval are added. Gold spans past the truncation point
    /// are dropped.
    pub fn prepare(&self, r: &Record, vocab: &Vocab, with_targets: bool, line: usize) -> Result<Vec<Instance>> {
        let kind = self.cfg.task.kind();
        if with_targets {
            r.check_gold(kind, line)?;
        } else {
            r.check_inputs(kind, line)?;
        }
        let max = self.max_len();
        Ok(match kind {
            TaskKind::Tagging | TaskKind::Relation => {
                let ids = self.content_ids(r.text.as_deref().unwrap(), vocab);
                let n = ids.len();
                if n == 0 {
                    return Err(Error::invalid(format!("record {line}: empty text")));
                }
                let target = if with_targets {
                    let spans: Vec<_> = r.entities.as_ref().unwrap().iter().filter(|s| s.end < n).cloned().collect();
                    Some(if kind == TaskKind::Tagging {
                        let (a, b) = self.scheme.encode(&spans, n)?;
                        Target::Tags(a, b)
                    } else {
                        let schema = self.schema.as_ref().unwrap();
                        let triples = r
                            .triples
                            .as_ref()
                            .unwrap()
                            .iter()
                            .filter(|t| t.subject < n && t.object < n)
                            .map(|t| {
                                let relation = schema
                                    .relation_index(&t.relation)
                                    .ok_or_else(|| Error::invalid(format!("record {line}: unknown relation {:?}", t.relation)))?;
                                Ok(RelationTriple { subject: t.subject, object: t.object, relation })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let (start, end) = pointer_labels(&spans, schema, n)?;
                        let cells = cell_labels(&triples, n, schema.relations.len())?;
                        Target::Relation { start, end, cells }
                    })
                } else {
                    None
                };
                vec![Instance { inputs: vec![Encoding::single(&ids)], target }]
            }
            TaskKind::Single => {
                let ids = self.content_ids(r.text.as_deref().unwrap(), vocab);
                let target = if with_targets { Some(Target::Class(self.label_index(r.label.as_deref().unwrap())?)) } else { None };
                vec![Instance { inputs: vec![Encoding::single(&ids)], target }]
            }
            TaskKind::Pair => {
                let a = tokenize(r.text.as_deref().unwrap(), vocab).ids;
                let b = tokenize(r.text2.as_deref().unwrap(), vocab).ids;
                let target = if with_targets { Some(Target::Class(self.label_index(r.label.as_deref().unwrap())?)) } else { None };
                vec![Instance { inputs: vec![pack_pair(&a, &b, max)?], target }]
            }
            TaskKind::Normalization => {
                let text = r.text.as_deref().unwrap();
                let mut cands = self.term_candidates(text)?;
                let gold: BTreeSet<&String> = r.normalized.iter().flatten().collect();
                if with_targets {
                    for g in &gold {
                        if !cands.contains(g) {
                            cands.push((*g).clone());
                        }
                    }
                }
                let a = tokenize(text, vocab).ids;
                cands
                    .iter()
                    .map(|c| {
                        let enc = pack_pair(&a, &tokenize(c, vocab).ids, max)?;
                        let target = if with_targets { Some(Target::Class(usize::from(gold.contains(c)))) } else { None };
                        Ok(Instance { inputs: vec![enc], target })
                    })
                    .collect::<Result<_>>()?
            }
            TaskKind::Choice => {
                let q = tokenize(r.question.as_deref().unwrap(), vocab).ids;
                let t = tokenize(r.evidence.as_deref().unwrap(), vocab).ids;
                let inputs = r
                    .candidates
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|c| pack_choice(&tokenize(c, vocab).ids, &q, &t, max))
                    .collect::<Result<_>>()?;
                vec![Instance { inputs, target: if with_targets { r.answer.map(Target::Choice) } else { None } }]
            }
        })
    }

    pub fn prepare_all(&self, records: &[Record], vocab: &Vocab, with_targets: bool) -> Result<Vec<Instance>> {
        let mut out = Vec::new();
        for (i, r) in records.iter().enumerate() {
            out.extend(self.prepare(r, vocab, with_targets, i + 1)?);
        }
        Ok(out)
    }

    fn affine<T: Real>(g: &mut Graph<'_, T>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let (w, b) = (g.param(w), g.param(b));
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    /// Mean loss of a batch: token cross-entropy for tagging, the pointer
    /// plus selection loss for relations, class cross-entropy, or the sum
    /// of the five binary cross-entropies per multiple-choice question.
    pub fn batch_loss<T: Real>(&self, params: &ModelParams<T>, g: &mut Graph<'_, T>, batch: &[&Instance], mode: &mut Mode<'_>) -> Result<Var> {
        let inputs: Vec<Encoding> = batch.iter().flat_map(|i| i.inputs.iter().cloned()).collect();
        let enc = params.encode(g, &inputs, Stack::Discriminator, mode)?;
        let target = |i: &Instance| i.target.clone().ok_or_else(|| Error::invalid("instance has no target"));
        match &self.head {
            Head::Tagging { a_w, a_b, b_w, b_b } => {
                let (mut rows, mut ga, mut gb) = (Vec::new(), Vec::new(), Vec::new());
                for (s, inst) in batch.iter().enumerate() {
                    let Target::Tags(a, b) = target(inst)? else { return Err(Error::invalid("expected tag targets")) };
                    rows.extend((0..a.len()).map(|t| enc.row(s, t + 1)));
                    ga.extend(a);
                    gb.extend(b);
                }
                let h = g.gather_rows(enc.hidden, &rows)?;
                let la = Self::affine(g, h, *a_w, *a_b)?;
                let lb = Self::affine(g, h, *b_w, *b_b)?;
                tagging_loss(g, la, lb, &ga, &gb)
            }
            Head::Relation(head) => {
                let mut total: Option<Var> = None;
                for (s, inst) in batch.iter().enumerate() {
                    let Target::Relation { start, end, cells } = target(inst)? else {
                        return Err(Error::invalid("expected relation targets"));
                    };
                    let n = enc.lens[s] - 2;
                    let h = g.slice_rows(enc.hidden, enc.row(s, 1), n)?;
                    let lg = mhs_forward(g, head, h)?;
                    let l = mhs_loss(g, &lg, &start, &end, &cells, self.cfg.mhs_weight)?;
                    total = Some(match total {
                        None => l,
                        Some(t) => g.add(t, l)?,
                    });
                }
                let t = total.ok_or_else(|| Error::invalid("empty batch"))?;
                g.scale(t, T::from_f64c(1.0 / batch.len() as f64))
            }
            Head::Classifier { w, b } => {
                let targets = batch
                    .iter()
                    .map(|i| match target(i)? {
                        Target::Class(c) => Ok(c),
                        _ => Err(Error::invalid("expected class targets")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let h = g.gather_rows(enc.hidden, &enc.cls_rows())?;
                let z = Self::affine(g, h, *w, *b)?;
                mean_cross_entropy(g, z, &targets)
            }
            Head::Binary { w, b } => {
                let mut labels = Vec::new();
                for i in batch {
                    let Target::Choice(a) = target(i)? else { return Err(Error::invalid("expected choice targets")) };
                    labels.extend((0..i.inputs.len()).map(|k| if k == a { T::one() } else { T::zero() }));
                }
                let h = g.gather_rows(enc.hidden, &enc.cls_rows())?;
                let z = Self::affine(g, h, *w, *b)?;
                let l = g.bce_with_logits(z, &labels)?;
                g.scale(l, T::from_f64c(1.0 / batch.len() as f64))
            }
        }
    }

    /// Eval-mode outputs for a batch.
    pub fn batch_outputs(&self, batch: &[&Instance]) -> Result<Vec<Output>> {
        let mut g = Graph::new(&self.params.store);
        let inputs: Vec<Encoding> = batch.iter().flat_map(|i| i.inputs.iter().cloned()).collect();
        let enc = self.params.encode(&mut g, &inputs, Stack::Discriminator, &mut Mode::Eval)?;
        let argmax = |row: &[f32]| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        };
        let softmax = |row: &[f32]| {
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
            let e: Vec<f64> = row.iter().map(|&v| (v as f64 - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let mut out = Vec::with_capacity(batch.len());
        match &self.head {
            Head::Tagging { a_w, a_b, b_w, b_b } => {
                for s in 0..batch.len() {
                    let n = enc.lens[s] - 2;
                    let h = g.slice_rows(enc.hidden, enc.row(s, 1), n)?;
                    let la = Self::affine(&mut g, h, *a_w, *a_b)?;
                    let lb = Self::affine(&mut g, h, *b_w, *b_b)?;
                    let (za, zb) = (g.value(la), g.value(lb));
                    out.push(Output::Tags((0..n).map(|t| argmax(za.row(t))).collect(), (0..n).map(|t| argmax(zb.row(t))).collect()));
                }
            }
            Head::Relation(head) => {
                for s in 0..batch.len() {
                    let n = enc.lens[s] - 2;
                    let h = g.slice_rows(enc.hidden, enc.row(s, 1), n)?;
                    let lg = mhs_forward(&mut g, head, h)?;
                    out.push(Output::Relation(MhsProbs::from_logits(&g, &lg)));
                }
            }
            Head::Classifier { w, b } => {
                let h = g.gather_rows(enc.hidden, &enc.cls_rows())?;
                let z = Self::affine(&mut g, h, *w, *b)?;
                let zv = g.value(z);
                out.extend((0..batch.len()).map(|i| Output::Class(softmax(zv.row(i)))));
            }
            Head::Binary { w, b } => {
                let h = g.gather_rows(enc.hidden, &enc.cls_rows())?;
                let z = Self::affine(&mut g, h, *w, *b)?;
                let zv = g.value(z).data();
                let mut k = 0;
                for inst in batch {
                    let m = inst.inputs.len();
                    out.push(Output::Choice(zv[k..k + m].iter().map(|&v| sigmoid(v) as f64).collect()));
                    k += m;
                }
            }
        }
        Ok(out)
    }

    pub fn outputs(&self, instances: &[Instance]) -> Result<Vec<Output>> {
        let refs: Vec<&Instance> = instances.iter().collect();
        let mut out = Vec::with_capacity(instances.len());
        for chunk in refs.chunks(self.cfg.batch_size.max(1)) {
            out.extend(self.batch_outputs(chunk)?);
        }
        Ok(out)
    }

    /// Copies of `records` with the prediction fields filled in.
    pub fn predict(&self, records: &[Record], vocab: &Vocab) -> Result<Vec<Record>> {
        let mut out = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let inst = self.prepare(r, vocab, false, i + 1)?;
            let outs = self.outputs(&inst)?;
            let mut p = r.clone();
            match self.cfg.task.kind() {
                TaskKind::Tagging => {
                    let Output::Tags(a, b) = &outs[0] else { unreachable!() };
                    p.pred_entities = Some(self.scheme.decode(a, b));
                }
                TaskKind::Relation => {
                    let Output::Relation(pr) = &outs[0] else { unreachable!() };
                    let schema = self.schema.as_ref().unwrap();
                    let th = self.cfg.threshold;
                    let ents = decode_pointers(&pr.start, &pr.end, pr.n, schema, th);
                    let triples = mhs_decode(&ents, |r, i, j| pr.cell(r, i, j), pr.n, schema, th);
                    p.pred_triples = Some(
                        triples
                            .into_iter()
                            .map(|t| TripleRecord { subject: t.subject, object: t.object, relation: schema.relations[t.relation].name.clone() })
                            .collect(),
                    );
                    p.pred_entities = Some(ents);
                }
                TaskKind::Single | TaskKind::Pair => {
                    let Output::Class(probs) = &outs[0] else { unreachable!() };
                    let best = argmax_f64(probs);
                    p.pred_label = Some(self.labels[best].clone());
                    p.pred_score = self.labels.iter().position(|l| l == POSITIVE_LABEL).map(|k| probs[k]);
                    p.pred_probs = Some(probs.clone());
                }
                TaskKind::Normalization => {
                    let cands = self.term_candidates(r.text.as_deref().unwrap())?;
                    let pos: Vec<f64> = outs.iter().map(|o| if let Output::Class(pr) = o { pr[1] } else { 0.0 }).collect();
                    let mut chosen: Vec<String> =
                        cands.iter().zip(&pos).filter(|(_, &s)| s > self.cfg.threshold).map(|(c, _)| c.clone()).collect();
                    if chosen.is_empty() && !cands.is_empty() {
                        chosen.push(cands[argmax_f64(&pos)].clone());
                    }
                    p.pred_normalized = Some(chosen);
                    p.pred_probs = Some(pos);
                }
                TaskKind::Choice => {
                    let Output::Choice(probs) = &outs[0] else { unreachable!() };
                    p.pred_answer = Some(choose(probs)?);
                    p.pred_probs = Some(probs.clone());
                }
            }
            out.push(p);
        }
        Ok(out)
    }

    pub fn evaluate(&self, records: &[Record], vocab: &Vocab) -> Result<f64> {
        score(self.cfg.task, &self.predict(records, vocab)?, records)
    }

    /// Fine-tunes on `train`. Batches follow a seeded shuffle per epoch;
    /// the learning rate warms up over `warmup_ratio` of all steps and then
    /// decays linearly. After every epoch the EMA weights are scored on
    /// `dev` if given; at the end the model holds the EMA weights.
    pub fn finetune(
        &mut self,
        train: &[Instance],
        dev: Option<(&[Record], &Vocab)>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        if train.is_empty() {
            return Err(Error::invalid("no training instances"));
        }
        let bs = self.cfg.batch_size;
        let per_epoch = train.len().div_ceil(bs) as u64;
        let total = per_epoch * self.cfg.epochs as u64;
        let warmup = (self.cfg.warmup_ratio * total as f64).round() as u64;
        let acfg = AdamConfig {
            beta1: self.cfg.adam_beta1,
            beta2: self.cfg.adam_beta2,
            eps: self.cfg.adam_epsilon,
            weight_decay: self.cfg.weight_decay,
        };
        let mut adam = Adam::new(&self.params.store);
        let mut ema = Ema::new(&self.params.store, self.cfg.ema_decay, self.cfg.ema_warmup)?;
        let mut records = Vec::new();
        let mut step = 0u64;
        for epoch in 0..self.cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng_for(self.cfg.seed, &[FT_ORDER, epoch as u64]));
            let mut loss_sum = 0.0;
            for chunk in order.chunks(bs) {
                let batch: Vec<&Instance> = chunk.iter().map(|&i| &train[i]).collect();
                let mut rng = rng_for(self.cfg.seed, &[FT_DROPOUT, step]);
                let grads = {
                    let mut g = Graph::new(&self.params.store);
                    let l = self.batch_loss(&self.params, &mut g, &batch, &mut Mode::Train(&mut rng))?;
                    loss_sum += g.value(l).item() as f64;
                    g.backward(l)?
                };
                step += 1;
                let lr = lr_at(step, self.cfg.learning_rate, warmup, total)?;
                adam.update(&mut self.params.store, &grads, lr, &acfg)?;
                ema.update(&self.params.store)?;
            }
            let dev_metric = match dev {
                Some((recs, vocab)) => {
                    let mut shadow = self.clone();
                    shadow.params.store = ema.apply(&self.params.store);
                    Some(shadow.evaluate(recs, vocab)?)
                }
                None => None,
            };
            let rec = EpochRecord { epoch: epoch + 1, steps: step, mean_loss: loss_sum / per_epoch as f64, dev_metric };
            on_epoch(&rec);
            records.push(rec);
        }
        self.params.store = ema.apply(&self.params.store);
        Ok(records)
    }
}

fn argmax_f64(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One term per non-empty line.
pub fn read_terminology(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let terms: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if terms.is_empty() {
        return Err(Error::Config(format!("{}: empty terminology", path.display())));
    }
    Ok(terms)
}
