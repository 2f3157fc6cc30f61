//! Two-stream BIOES tagging. Stream A tags symptom entities; stream B tags
//! every other type. Spans may overlap only across streams.
//!
//! Label ids: 0 is `O`; type `t` uses `1 + 4t + k` with `k` = B, I, E, S.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Var};
use crate::error::{Error, Result};

pub const SYMPTOM_TYPE: &str = "sym";
pub const CMEEE_OTHER_TYPES: [&str; 8] = ["dis", "dru", "equ", "pro", "bod", "ite", "mic", "dep"];

const B: usize = 0;
const I: usize = 1;
const E: usize = 2;
const S: usize = 3;
const TAGS: [&str; 4] = ["B", "I", "E", "S"];

/// Inclusive token span `[start, end]` of the given type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub ty: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, ty: &str) -> Self {
        EntitySpan { start, end, ty: ty.to_string() }
    }

    fn overlaps(&self, o: &EntitySpan) -> bool {
        self.start <= o.end && o.start <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagScheme {
    symptom: String,
    others: Vec<String>,
}

impl Default for TagScheme {
    fn default() -> Self {
        TagScheme::new(SYMPTOM_TYPE, &CMEEE_OTHER_TYPES).unwrap()
    }
}

impl TagScheme {
    pub fn new<S: AsRef<str>>(symptom: &str, others: &[S]) -> Result<Self> {
        let others: Vec<String> = others.iter().map(|s| s.as_ref().to_string()).collect();
        if others.is_empty() {
            return Err(Error::Config("tag scheme needs at least one non-symptom type".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in std::iter::once(symptom).chain(others.iter().map(String::as_str)) {
            if t.is_empty() || !seen.insert(t) {
                return Err(Error::Config(format!("entity type {t:?} empty or repeated")));
            }
        }
        Ok(TagScheme { symptom: symptom.to_string(), others })
    }

    pub fn symptom(&self) -> &str {
        &self.symptom
    }

    pub fn others(&self) -> &[String] {
        &self.others
    }

    /// Symptom first, then the other types in order.
    pub fn types(&self) -> Vec<String> {
        std::iter::once(self.symptom.clone()).chain(self.others.iter().cloned()).collect()
    }

    pub fn num_labels(&self, s: Stream) -> usize {
        match s {
            Stream::A => 5,
            Stream::B => 4 * self.others.len() + 1,
        }
    }

    fn stream_types(&self, s: Stream) -> &[String] {
        match s {
            Stream::A => std::slice::from_ref(&self.symptom),
            Stream::B => &self.others,
        }
    }

    pub fn label_name(&self, s: Stream, label: usize) -> Option<String> {
        if label == 0 {
            return Some("O".into());
        }
        let types = self.stream_types(s);
        let t = types.get((label - 1) / 4)?;
        Some(format!("{}-{t}", TAGS[(label - 1) % 4]))
    }

    fn locate(&self, ty: &str) -> Option<(Stream, usize)> {
        if ty == self.symptom {
            return Some((Stream::A, 0));
        }
        self.others.iter().position(|t| t == ty).map(|i| (Stream::B, i))
    }

    /// Known types, in-bounds spans, and no overlap within a stream.
    pub fn validate(&self, spans: &[EntitySpan], len: usize) -> Result<()> {
        for (i, sp) in spans.iter().enumerate() {
            let (stream, _) = self.locate(&sp.ty).ok_or_else(|| Error::invalid(format!("unknown entity type {:?}", sp.ty)))?;
            if sp.start > sp.end || sp.end >= len {
                return Err(Error::invalid(format!("span {}..={} invalid for {len} tokens", sp.start, sp.end)));
            }
            for other in &spans[..i] {
                if self.locate(&other.ty).map(|l| l.0) == Some(stream) && sp.overlaps(other) {
                    return Err(Error::invalid(format!(
                        "overlapping spans {}..={} ({}) and {}..={} ({}) in one stream",
                        other.start, other.end, other.ty, sp.start, sp.end, sp.ty
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gold tags for both streams.
    pub fn encode(&self, spans: &[EntitySpan], len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate(spans, len)?;
        let mut a = vec![0; len];
        let mut b = vec![0; len];
        for sp in spans {
            let (stream, t) = self.locate(&sp.ty).unwrap();
            let tags = if stream == Stream::A { &mut a } else { &mut b };
            let base = 1 + 4 * t;
            if sp.start == sp.end {
                tags[sp.start] = base + S;
            } else {
                tags[sp.start] = base + B;
                for x in &mut tags[sp.start + 1..sp.end] {
                    *x = base + I;
                }
                tags[sp.end] = base + E;
            }
        }
        Ok((a, b))
    }

    fn decode_stream(&self, s: Stream, tags: &[usize], out: &mut Vec<EntitySpan>) {
        let types = self.stream_types(s);
        let mut open: Option<(usize, usize)> = None;
        for (i, &l) in tags.iter().enumerate() {
            if l == 0 || l > 4 * types.len() {
                open = None;
                continue;
            }
            let (t, k) = ((l - 1) / 4, (l - 1) % 4);
            match k {
                S => {
                    out.push(EntitySpan::new(i, i, &types[t]));
                    open = None;
                }
                B => open = Some((i, t)),
                I => {
                    if open.map_or(true, |(_, ot)| ot != t) {
                        open = None;
                    }
                }
                _ => {
                    if let Some((start, ot)) = open {
                        if ot == t {
                            out.push(EntitySpan::new(start, i, &types[t]));
                        }
                    }
                    open = None;
                }
            }
        }
    }

    /// Spans from per-token labels of both streams. Malformed runs such as
    /// an `I` without a preceding `B` are dropped. Output is sorted.
    pub fn decode(&self, a: &[usize], b: &[usize]) -> Vec<EntitySpan> {
        let mut out = Vec::new();
        self.decode_stream(Stream::A, a, &mut out);
        self.decode_stream(Stream::B, b, &mut out);
        out.sort();
        out
    }
}

/// Mean token cross-entropy of each stream, averaged 1:1.
pub fn tagging_loss<T: Real>(g: &mut Graph<'_, T>, logits_a: Var, logits_b: Var, gold_a: &[usize], gold_b: &[usize]) -> Result<Var> {
    let ca = mean_cross_entropy(g, logits_a, gold_a)?;
    let cb = mean_cross_entropy(g, logits_b, gold_b)?;
    let s = g.add(ca, cb)?;
    g.scale(s, T::from_f64c(0.5))
}

/// Mean over rows of `−log softmax(logits)[row, target]`.
pub fn mean_cross_entropy<T: Real>(g: &mut Graph<'_, T>, logits: Var, targets: &[usize]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::invalid("cross-entropy over zero rows"));
    }
    let lp = g.log_softmax_rows(logits)?;
    let picked = g.pick_cols(lp, targets)?;
    let s = g.sum_all(picked)?;
    g.scale(s, T::from_f64c(-1.0 / targets.len() as f64))
}
