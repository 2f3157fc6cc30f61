use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    MicroF1,
    MacroF1,
    Accuracy,
    PrecisionAt1,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MicroF1 => "micro-f1",
            MetricKind::MacroF1 => "macro-f1",
            MetricKind::Accuracy => "accuracy",
            MetricKind::PrecisionAt1 => "p@1",
        }
    }
}

fn aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{a} predictions for {b} gold items")));
    }
    Ok(())
}

fn f1(tp: usize, n_pred: usize, n_gold: usize) -> f64 {
    if n_pred == 0 && n_gold == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / n_pred as f64;
    let r = tp as f64 / n_gold as f64;
    2.0 * p * r / (p + r)
}

/// F1 over pooled exact matches of per-example item sets. Empty predictions
/// and empty gold score 1.
pub fn micro_f1<T: Eq + Hash>(pred: &[Vec<T>], gold: &[Vec<T>]) -> Result<f64> {
    aligned(pred.len(), gold.len())?;
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let p: HashSet<&T> = p.iter().collect();
        let g: HashSet<&T> = g.iter().collect();
        tp += p.intersection(&g).count();
        np += p.len();
        ng += g.len();
    }
    Ok(f1(tp, np, ng))
}

/// Mean per-class F1 over the classes seen in predictions or gold.
pub fn macro_f1(pred: &[usize], gold: &[usize]) -> Result<f64> {
    aligned(pred.len(), gold.len())?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let classes: BTreeSet<usize> = pred.iter().chain(gold).copied().collect();
    let mut sum = 0.0;
    for &c in &classes {
        let tp = pred.iter().zip(gold).filter(|(&p, &g)| p == c && g == c).count();
        let np = pred.iter().filter(|&&p| p == c).count();
        let ng = gold.iter().filter(|&&g| g == c).count();
        sum += f1(tp, np, ng);
    }
    Ok(sum / classes.len() as f64)
}

pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64> {
    aligned(pred.len(), gold.len())?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    Ok(pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64)
}

/// Share of groups whose highest-scored candidate is relevant; ties go to
/// the lowest index.
pub fn precision_at_1(scores: &[Vec<f64>], relevant: &[Vec<bool>]) -> Result<f64> {
    aligned(scores.len(), relevant.len())?;
    if scores.is_empty() {
        return Ok(1.0);
    }
    let mut hits = 0;
    for (s, r) in scores.iter().zip(relevant) {
        aligned(s.len(), r.len())?;
        if s.is_empty() {
            return Err(Error::invalid("group without candidates"));
        }
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        hits += usize::from(r[best]);
    }
    Ok(hits as f64 / scores.len() as f64)
}
