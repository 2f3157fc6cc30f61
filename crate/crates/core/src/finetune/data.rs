//! JSON-lines task records. One struct covers every task; each task reads
//! the fields it needs:
//!
//! | kind | input fields | gold fields |
//! |------|--------------|-------------|
//! | tagging | `text` | `entities` |
//! | relation | `text` | `entities`, `triples` |
//! | normalization | `text` | `normalized` |
//! | single | `text` | `label` |
//! | pair | `text`, `text2` | `label` |
//! | choice | `question`, `candidates`, `evidence` | `answer` (0-based) |
//!
//! Entity offsets are inclusive token indices into the tokenized text.
//! Predictions repeat the record with `pred_*` fields filled in.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Task, TaskKind};
use super::metrics::{accuracy, macro_f1, micro_f1, precision_at_1, MetricKind};
use super::tags::EntitySpan;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleRecord {
    pub subject: usize,
    pub object: usize,
    pub relation: String,
}

/// Label whose probability scores candidates for precision@1.
pub const POSITIVE_LABEL: &str = "1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<EntitySpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<Vec<TripleRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_answer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_entities: Option<Vec<EntitySpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_triples: Option<Vec<TripleRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_normalized: Option<Vec<String>>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str, line: usize) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Format(format!("record {line}: missing `{field}`")))
}

impl Record {
    /// Checks that the input fields of `kind` are present.
    pub fn check_inputs(&self, kind: TaskKind, line: usize) -> Result<()> {
        match kind {
            TaskKind::Tagging | TaskKind::Relation | TaskKind::Normalization | TaskKind::Single => {
                need(&self.text, "text", line)?;
            }
            TaskKind::Pair => {
                need(&self.text, "text", line)?;
                need(&self.text2, "text2", line)?;
            }
            TaskKind::Choice => {
                need(&self.question, "question", line)?;
                need(&self.evidence, "evidence", line)?;
                let c = need(&self.candidates, "candidates", line)?;
                if c.len() != super::classify::NUM_CHOICES {
                    return Err(Error::Format(format!("record {line}: {} candidates, expected 5", c.len())));
                }
            }
        }
        Ok(())
    }

    /// Checks that the gold fields of `kind` are present.
    pub fn check_gold(&self, kind: TaskKind, line: usize) -> Result<()> {
        self.check_inputs(kind, line)?;
        match kind {
            TaskKind::Tagging => drop(need(&self.entities, "entities", line)?),
            TaskKind::Relation => {
                need(&self.entities, "entities", line)?;
                need(&self.triples, "triples", line)?;
            }
            TaskKind::Normalization => drop(need(&self.normalized, "normalized", line)?),
            TaskKind::Single | TaskKind::Pair => drop(need(&self.label, "label", line)?),
            TaskKind::Choice => {
                let a = *need(&self.answer, "answer", line)?;
                if a >= super::classify::NUM_CHOICES {
                    return Err(Error::Format(format!("record {line}: answer {a} out of range")));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_jsonl(&text)
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn need_pred<'a, T>(v: &'a Option<T>, field: &str, line: usize) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Format(format!("prediction {line}: missing `{field}`")))
}

/// The task metric of `pred` against `gold`, aligned by position.
pub fn score(task: Task, pred: &[Record], gold: &[Record]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold records", pred.len(), gold.len())));
    }
    let kind = task.kind();
    for (i, g) in gold.iter().enumerate() {
        g.check_gold(kind, i + 1)?;
    }
    match (kind, task.metric()) {
        (TaskKind::Tagging, _) => {
            let p: Vec<Vec<EntitySpan>> =
                pred.iter().enumerate().map(|(i, r)| need_pred(&r.pred_entities, "pred_entities", i + 1).cloned()).collect::<Result<_>>()?;
            let g: Vec<Vec<EntitySpan>> = gold.iter().map(|r| r.entities.clone().unwrap()).collect();
            micro_f1(&p, &g)
        }
        (TaskKind::Relation, _) => {
            let p: Vec<Vec<TripleRecord>> =
                pred.iter().enumerate().map(|(i, r)| need_pred(&r.pred_triples, "pred_triples", i + 1).cloned()).collect::<Result<_>>()?;
            let g: Vec<Vec<TripleRecord>> = gold.iter().map(|r| r.triples.clone().unwrap()).collect();
            micro_f1(&p, &g)
        }
        (TaskKind::Normalization, _) => {
            let p: Vec<Vec<String>> = pred
                .iter()
                .enumerate()
                .map(|(i, r)| need_pred(&r.pred_normalized, "pred_normalized", i + 1).cloned())
                .collect::<Result<_>>()?;
            let g: Vec<Vec<String>> = gold.iter().map(|r| r.normalized.clone().unwrap()).collect();
            micro_f1(&p, &g)
        }
        (TaskKind::Choice, _) => {
            let p: Vec<usize> =
                pred.iter().enumerate().map(|(i, r)| need_pred(&r.pred_answer, "pred_answer", i + 1).copied()).collect::<Result<_>>()?;
            let g: Vec<usize> = gold.iter().map(|r| r.answer.unwrap()).collect();
            accuracy(&p, &g)
        }
        (_, MetricKind::PrecisionAt1) => {
            let mut groups: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
            let mut first: BTreeMap<&str, usize> = BTreeMap::new();
            for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
                let q = g.text.as_deref().unwrap();
                let n = first.len();
                let key = *first.entry(q).or_insert(n);
                let e = groups.entry(key).or_default();
                e.0.push(*need_pred(&p.pred_score, "pred_score", i + 1)?);
                e.1.push(g.label.as_deref() == Some(POSITIVE_LABEL));
            }
            let (s, r): (Vec<_>, Vec<_>) = groups.into_values().unzip();
            precision_at_1(&s, &r)
        }
        (_, metric) => {
            let p: Vec<String> =
                pred.iter().enumerate().map(|(i, r)| need_pred(&r.pred_label, "pred_label", i + 1).cloned()).collect::<Result<_>>()?;
            let g: Vec<String> = gold.iter().map(|r| r.label.clone().unwrap()).collect();
            match metric {
                MetricKind::MicroF1 => {
                    let wrap = |v: &[String]| v.iter().map(|x| vec![x.clone()]).collect::<Vec<_>>();
                    micro_f1(&wrap(&p), &wrap(&g))
                }
                MetricKind::MacroF1 => {
                    let names: Vec<&String> = {
                        let mut v: Vec<&String> = p.iter().chain(&g).collect();
                        v.sort();
                        v.dedup();
                        v
                    };
                    let idx = |x: &String| names.binary_search(&x).unwrap();
                    macro_f1(&p.iter().map(idx).collect::<Vec<_>>(), &g.iter().map(idx).collect::<Vec<_>>())
                }
                _ => accuracy(&p, &g),
            }
        }
    }
}
