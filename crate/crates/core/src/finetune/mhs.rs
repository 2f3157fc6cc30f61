//! Joint entity and relation extraction: per-type start/end pointers plus
//! multi-head selection over start tokens with a relation-specific biaffine
//! score `h_iᵀ U_r h_j + u_rᵀ[h_i; h_j] + b_r`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::tags::EntitySpan;
use crate::autodiff::{sigmoid, Graph, ParamId, Real, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub name: String,
    pub subject_type: String,
    pub object_type: String,
}

/// Entity types and the typed relations between them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub entity_types: Vec<String>,
    pub relations: Vec<RelationType>,
}

impl RelationSchema {
    pub fn validate(&self) -> Result<()> {
        let types: BTreeSet<&str> = self.entity_types.iter().map(String::as_str).collect();
        if types.len() != self.entity_types.len() || types.is_empty() {
            return Err(Error::Config("schema entity types must be non-empty and distinct".into()));
        }
        if self.relations.is_empty() {
            return Err(Error::Config("schema has no relations".into()));
        }
        let mut names = BTreeSet::new();
        for r in &self.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("relation {:?} repeated", r.name)));
            }
            for t in [&r.subject_type, &r.object_type] {
                if !types.contains(t.as_str()) {
                    return Err(Error::Config(format!("relation {:?} uses unknown type {t:?}", r.name)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let s: RelationSchema = serde_json::from_slice(&std::fs::read(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn type_index(&self, ty: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == ty)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }
}

/// Subject start, object start, relation index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject: usize,
    pub object: usize,
    pub relation: usize,
}

/// Parameter ids of the head. `u` is `d × (R·d)` with `U_r` in columns
/// `r·d .. (r+1)·d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MhsHead {
    pub start_w: ParamId,
    pub start_b: ParamId,
    pub end_w: ParamId,
    pub end_b: ParamId,
    pub u: ParamId,
    pub sub_w: ParamId,
    pub obj_w: ParamId,
    pub rel_b: ParamId,
    pub hidden: usize,
    pub types: usize,
    pub relations: usize,
}

/// Logits for one sequence of `n` tokens: `start`, `end` are `n × T`;
/// `cells` is `(R·n) × n` with row `r·n + i`, column `j`.
pub struct MhsLogits {
    pub start: Var,
    pub end: Var,
    pub cells: Var,
}

fn affine<T: Real>(g: &mut Graph<'_, T>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
    let (w, b) = (g.param(w), g.param(b));
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

pub fn mhs_forward<T: Real>(g: &mut Graph<'_, T>, head: &MhsHead, h: Var) -> Result<MhsLogits> {
    let n = g.shape(h)[0];
    let d = head.hidden;
    let start = affine(g, h, head.start_w, head.start_b)?;
    let end = affine(g, h, head.end_w, head.end_b)?;
    let u = g.param(head.u);
    let hu = g.matmul(h, u)?;
    // subject term with the relation bias folded in, then object term
    let p = affine(g, h, head.sub_w, head.rel_b)?;
    let obj_w = g.param(head.obj_w);
    let q = g.matmul(h, obj_w)?;
    let mut grids = Vec::with_capacity(head.relations);
    for r in 0..head.relations {
        let a = g.slice_cols(hu, r * d, d)?;
        let s = g.matmul_bt(a, h)?;
        let qr = g.slice_cols(q, r, 1)?;
        let qr = g.reshape(qr, &[n])?;
        let s = g.add_row(s, qr)?;
        let pr = g.slice_cols(p, r, 1)?;
        let pr = g.reshape(pr, &[n])?;
        let st = g.transpose(s)?;
        let st = g.add_row(st, pr)?;
        grids.push(g.transpose(st)?);
    }
    let cells = g.concat_rows(&grids)?;
    Ok(MhsLogits { start, end, cells })
}

/// Row-major `n × T` start and end indicator targets.
pub fn pointer_labels(spans: &[EntitySpan], schema: &RelationSchema, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = schema.entity_types.len();
    let mut start = vec![0.0; n * t];
    let mut end = vec![0.0; n * t];
    for sp in spans {
        let k = schema.type_index(&sp.ty).ok_or_else(|| Error::invalid(format!("unknown entity type {:?}", sp.ty)))?;
        if sp.start > sp.end || sp.end >= n {
            return Err(Error::invalid(format!("span {}..={} invalid for {n} tokens", sp.start, sp.end)));
        }
        start[sp.start * t + k] = 1.0;
        end[sp.end * t + k] = 1.0;
    }
    Ok((start, end))
}

/// Targets laid out like [`MhsLogits::cells`].
pub fn cell_labels(triples: &[RelationTriple], n: usize, relations: usize) -> Result<Vec<f64>> {
    let mut y = vec![0.0; relations * n * n];
    for tr in triples {
        if tr.subject >= n || tr.object >= n || tr.relation >= relations {
            return Err(Error::invalid(format!("triple {tr:?} out of range")));
        }
        y[tr.relation * n * n + tr.subject * n + tr.object] = 1.0;
    }
    Ok(y)
}

/// Mean pointer BCE over all `2·n·T` start/end cells plus `mhs_weight`
/// times the mean BCE over all `R·n²` relation cells. Every cell not in
/// the gold set is a negative.
pub fn mhs_loss<T: Real>(
    g: &mut Graph<'_, T>,
    logits: &MhsLogits,
    start: &[f64],
    end: &[f64],
    cells: &[f64],
    mhs_weight: f64,
) -> Result<Var> {
    let cast = |v: &[f64]| v.iter().map(|&x| T::from_f64c(x)).collect::<Vec<T>>();
    let ls = g.bce_with_logits(logits.start, &cast(start))?;
    let le = g.bce_with_logits(logits.end, &cast(end))?;
    let lp = g.add(ls, le)?;
    let lp = g.scale(lp, T::from_f64c(1.0 / (start.len() + end.len()) as f64))?;
    let lc = g.bce_with_logits(logits.cells, &cast(cells))?;
    let lc = g.scale(lc, T::from_f64c(mhs_weight / cells.len() as f64))?;
    g.add(lp, lc)
}

/// Probabilities of a forward pass, as plain arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct MhsProbs {
    pub n: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub cells: Vec<f64>,
}

impl MhsProbs {
    pub fn from_logits<T: Real>(g: &Graph<'_, T>, l: &MhsLogits) -> Self {
        let p = |v: Var| g.value(v).data().iter().map(|&z| sigmoid(z).as_f64()).collect::<Vec<f64>>();
        MhsProbs { n: g.shape(l.start)[0], start: p(l.start), end: p(l.end), cells: p(l.cells) }
    }

    pub fn cell(&self, r: usize, i: usize, j: usize) -> f64 {
        self.cells[r * self.n * self.n + i * self.n + j]
    }
}

/// Spans from pointer probabilities: each start above `threshold` pairs
/// with the nearest end at or after it of the same type.
pub fn decode_pointers(start: &[f64], end: &[f64], n: usize, schema: &RelationSchema, threshold: f64) -> Vec<EntitySpan> {
    let t = schema.entity_types.len();
    let mut out = Vec::new();
    for k in 0..t {
        for i in 0..n {
            if start[i * t + k] > threshold {
                if let Some(j) = (i..n).find(|&j| end[j * t + k] > threshold) {
                    out.push(EntitySpan::new(i, j, &schema.entity_types[k]));
                }
            }
        }
    }
    out.sort();
    out
}

/// Triples whose cell probability exceeds `threshold` and whose subject
/// and object positions start decoded entities of the relation's types.
pub fn mhs_decode(
    entities: &[EntitySpan],
    cell: impl Fn(usize, usize, usize) -> f64,
    n: usize,
    schema: &RelationSchema,
    threshold: f64,
) -> Vec<RelationTriple> {
    let starts: BTreeSet<(usize, &str)> = entities.iter().map(|e| (e.start, e.ty.as_str())).collect();
    let mut out = Vec::new();
    for (r, rel) in schema.relations.iter().enumerate() {
        for i in 0..n {
            if !starts.contains(&(i, rel.subject_type.as_str())) {
                continue;
            }
            for j in 0..n {
                if starts.contains(&(j, rel.object_type.as_str())) && cell(r, i, j) > threshold {
                    out.push(RelationTriple { subject: i, object: j, relation: r });
                }
            }
        }
    }
    out.sort();
    out
}
