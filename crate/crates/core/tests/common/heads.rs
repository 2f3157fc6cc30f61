//! Random generators and checks for the tagging and relation decoders.

use ehdiscrim_core::finetune::{mhs_decode, EntitySpan, RelationSchema, RelationTriple, TagScheme};
use rand::Rng;

/// Spans with no overlap inside a stream; symptom spans may nest in or
/// cross other spans.
pub fn random_spans<R: Rng>(rng: &mut R, scheme: &TagScheme, len: usize) -> Vec<EntitySpan> {
    let mut out = Vec::new();
    for stream_types in [vec![scheme.symptom().to_string()], scheme.others().to_vec()] {
        let mut i = 0;
        while i < len {
            if rng.gen_bool(0.35) {
                let end = (i + rng.gen_range(0..4)).min(len - 1);
                let ty = &stream_types[rng.gen_range(0..stream_types.len())];
                out.push(EntitySpan::new(i, end, ty));
                i = end + 1 + rng.gen_range(0..2);
            } else {
                i += 1;
            }
        }
    }
    out.sort();
    out
}

/// Count of span sets that do not survive encode then decode.
pub fn bioes_failures<R: Rng>(rng: &mut R, cases: usize) -> usize {
    let scheme = TagScheme::default();
    (0..cases)
        .filter(|_| {
            let len = rng.gen_range(1..40);
            let spans = random_spans(rng, &scheme, len);
            match scheme.encode(&spans, len) {
                Ok((a, b)) => scheme.decode(&a, &b) != spans,
                Err(_) => true,
            }
        })
        .count()
}

pub fn random_schema<R: Rng>(rng: &mut R) -> RelationSchema {
    let types: Vec<String> = (0..rng.gen_range(1..5)).map(|t| format!("t{t}")).collect();
    let relations = (0..rng.gen_range(1..4))
        .map(|r| ehdiscrim_core::finetune::RelationType {
            name: format!("r{r}"),
            subject_type: types[rng.gen_range(0..types.len())].clone(),
            object_type: types[rng.gen_range(0..types.len())].clone(),
        })
        .collect();
    RelationSchema { entity_types: types, relations }
}

/// Decodes a random score grid and checks every triple against the
/// schema, plus completeness against a direct scan. Returns the number of
/// violations.
pub fn mhs_violations<R: Rng>(rng: &mut R) -> usize {
    let schema = random_schema(rng);
    let n = rng.gen_range(1..12);
    let r = schema.relations.len();
    let entities: Vec<EntitySpan> = (0..rng.gen_range(0..n + 1))
        .map(|_| {
            let s = rng.gen_range(0..n);
            let ty = &schema.entity_types[rng.gen_range(0..schema.entity_types.len())];
            EntitySpan::new(s, rng.gen_range(s..n), ty)
        })
        .collect();
    let grid: Vec<f64> = (0..r * n * n).map(|_| rng.gen::<f64>()).collect();
    let cell = |k: usize, i: usize, j: usize| grid[k * n * n + i * n + j];
    let thr = 0.5;
    let got = mhs_decode(&entities, cell, n, &schema, thr);
    let starts_type = |p: usize, ty: &str| entities.iter().any(|e| e.start == p && e.ty == ty);
    let mut bad = got
        .iter()
        .filter(|t| {
            let rel = &schema.relations[t.relation];
            !(starts_type(t.subject, &rel.subject_type) && starts_type(t.object, &rel.object_type) && cell(t.relation, t.subject, t.object) > thr)
        })
        .count();
    let mut expected = Vec::new();
    for (k, rel) in schema.relations.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                if starts_type(i, &rel.subject_type) && starts_type(j, &rel.object_type) && cell(k, i, j) > thr {
                    expected.push(RelationTriple { subject: i, object: j, relation: k });
                }
            }
        }
    }
    expected.sort();
    let mut sorted = got.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != got.len() || sorted != expected {
        bad += 1;
    }
    bad
}
