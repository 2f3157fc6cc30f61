//! Model and loss outputs against independent brute-force enumerations.

use ehdiscrim_core::autodiff::{Graph, ParamStore, Tensor};
use ehdiscrim_core::finetune::{cell_labels, mhs_forward, mhs_loss, pointer_labels, EntitySpan, MhsHead, RelationSchema, RelationTriple, RelationType};
use ehdiscrim_core::model::Encoding;
use ehdiscrim_core::pretrain::loss_csp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{toy_model, TOY_VOCAB};
use crate::naive::Naive;
use crate::Check;

const TOL: f64 = 1e-6;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_content(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(5..TOY_VOCAB as u32)).collect()
}

fn mlm_and_mts() -> (Check, Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut mlm_err, mut mts_err) = (0.0f64, 0.0f64);
    for trial in 0..6 {
        let m = toy_model(40 + trial, 0.4);
        let naive = Naive::new(&m);
        // up to 16 positions including [CLS] and [SEP]
        let n = rng.gen_range(3..=14);
        let content = random_content(&mut rng, n);
        let enc = Encoding::single(&content);
        let positions: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.5)).chain([1]).collect();

        let got = m.mlm_probs(&enc, &positions).unwrap();
        let hg = naive.hidden(&content, true);
        let want = naive.mlm_probs(&positions.iter().map(|&p| hg[p].clone()).collect::<Vec<_>>());
        for (a, b) in got.iter().zip(&want) {
            mlm_err = mlm_err.max(max_diff(a, b));
        }

        let sets: Vec<Vec<u32>> = positions
            .iter()
            .map(|_| {
                let mut s: Vec<u32> = Vec::new();
                while s.len() < 6 {
                    let c = rng.gen_range(5..TOY_VOCAB as u32);
                    if !s.contains(&c) {
                        s.push(c);
                    }
                }
                s.sort_unstable();
                s
            })
            .collect();
        let got = m.mts_probs(&enc, &positions, &sets).unwrap();
        let hd = naive.hidden(&content, false);
        for ((row, &p), set) in got.iter().zip(&positions).zip(&sets) {
            mts_err = mts_err.max(max_diff(row, &naive.mts_probs(&hd[p], set)));
        }
    }
    (
        Check::new("mlm_probs", mlm_err < TOL, format!("max abs diff {mlm_err:.2e} over 6 random models")),
        Check::new("mts_probs", mts_err < TOL, format!("max abs diff {mts_err:.2e} over 6 random models")),
    )
}

fn csp_value(rows: &[Vec<f64>], tau: f64) -> f64 {
    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    let e = g.constant(Tensor::from_rows(rows).unwrap()).unwrap();
    let l = loss_csp(&mut g, e, tau).unwrap();
    g.value(l).item()
}

fn csp_brute(rows: &[Vec<f64>], tau: f64) -> f64 {
    let n = rows.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / tau;
    let mut total = 0.0;
    for i in 0..n {
        let pos = if i % 2 == 0 { i + 1 } else { i - 1 };
        let denom: f64 = (0..n).filter(|&j| j != i).map(|j| dot(&rows[i], &rows[j]).exp()).sum();
        total += -(dot(&rows[i], &rows[pos]).exp() / denom).ln();
    }
    total / n as f64
}

fn csp_checks() -> (Check, Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut err: f64 = 0.0;
    for b in [2usize, 3, 4, 8] {
        for _ in 0..5 {
            let rows: Vec<Vec<f64>> = (0..2 * b)
                .map(|_| {
                    let v: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let tau = rng.gen_range(0.05..1.0);
            err = err.max((csp_value(&rows, tau) - csp_brute(&rows, tau)).abs());
        }
    }
    let mut eq_err: f64 = 0.0;
    let mut detail = Vec::new();
    for b in [2usize, 4, 8] {
        let u = vec![0.6, 0.0, -0.8];
        let rows = vec![u; 2 * b];
        let got = csp_value(&rows, 0.07);
        let want = ((2 * b - 1) as f64).ln();
        eq_err = eq_err.max((got - want).abs());
        detail.push(format!("B={b}: {got:.12} vs ln({}) = {want:.12}", 2 * b - 1));
    }
    (
        Check::new("loss_csp", err < TOL, format!("max abs diff {err:.2e} vs pairwise enumeration")),
        Check::new("loss_csp-equal-embeddings", eq_err < 1e-9, format!("{} (max err {eq_err:.1e})", detail.join("; "))),
    )
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn mhs_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let schema = RelationSchema {
        entity_types: vec!["dis".into(), "sym".into()],
        relations: vec![
            RelationType { name: "has".into(), subject_type: "dis".into(), object_type: "sym".into() },
            RelationType { name: "comp".into(), subject_type: "dis".into(), object_type: "dis".into() },
            RelationType { name: "cause".into(), subject_type: "sym".into(), object_type: "dis".into() },
        ],
    };
    let (d, t, r) = (5usize, 2usize, 3usize);
    let mut err: f64 = 0.0;
    for trial in 0..5 {
        let n = 4 + 3 * trial;
        let mut store = ParamStore::<f64>::new();
        let mut p = |name: &str, shape: &[usize], rng: &mut ChaCha8Rng| {
            let k = shape.iter().product();
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.7..0.7)).collect();
            (store.insert(name, Tensor::new(shape.to_vec(), v.clone()).unwrap(), true).unwrap(), v)
        };
        let (start_w, sw) = p("s.w", &[d, t], &mut rng);
        let (start_b, sb) = p("s.b", &[t], &mut rng);
        let (end_w, ew) = p("e.w", &[d, t], &mut rng);
        let (end_b, eb) = p("e.b", &[t], &mut rng);
        let (u, uv) = p("u", &[d, r * d], &mut rng);
        let (sub_w, subv) = p("sub", &[d, r], &mut rng);
        let (obj_w, objv) = p("obj", &[d, r], &mut rng);
        let (rel_b, rb) = p("rb", &[r], &mut rng);
        let head = MhsHead { start_w, start_b, end_w, end_b, u, sub_w, obj_w, rel_b, hidden: d, types: t, relations: r };
        let h: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

        let mut spans = Vec::new();
        let mut i = 0;
        while i < n {
            let len = rng.gen_range(1..=3).min(n - i);
            if rng.gen_bool(0.5) {
                spans.push(EntitySpan::new(i, i + len - 1, if rng.gen() { "dis" } else { "sym" }));
            }
            i += len;
        }
        let triples: Vec<RelationTriple> = (0..3)
            .map(|_| RelationTriple { subject: rng.gen_range(0..n), object: rng.gen_range(0..n), relation: rng.gen_range(0..r) })
            .collect();
        let (ys, ye) = pointer_labels(&spans, &schema, n).unwrap();
        let yc = cell_labels(&triples, n, r).unwrap();
        let weight = rng.gen_range(0.5..2.0);

        let got = {
            let mut g = Graph::new(&store);
            let hv = g.constant(Tensor::from_rows(&h).unwrap()).unwrap();
            let l = mhs_forward(&mut g, &head, hv).unwrap();
            let loss = mhs_loss(&mut g, &l, &ys, &ye, &yc, weight).unwrap();
            g.value(loss).item()
        };

        let mut pointer = 0.0;
        for i in 0..n {
            for k in 0..t {
                let zs = sb[k] + (0..d).map(|a| h[i][a] * sw[a * t + k]).sum::<f64>();
                let ze = eb[k] + (0..d).map(|a| h[i][a] * ew[a * t + k]).sum::<f64>();
                pointer += bce(zs, ys[i * t + k]) + bce(ze, ye[i * t + k]);
            }
        }
        let mut cells = 0.0;
        for rr in 0..r {
            for i in 0..n {
                for j in 0..n {
                    let mut z = rb[rr];
                    for a in 0..d {
                        for b in 0..d {
                            z += h[i][a] * uv[a * r * d + rr * d + b] * h[j][b];
                        }
                        z += subv[a * r + rr] * h[i][a] + objv[a * r + rr] * h[j][a];
                    }
                    cells += bce(z, yc[rr * n * n + i * n + j]);
                }
            }
        }
        let want = pointer / (2 * n * t) as f64 + weight * cells / (r * n * n) as f64;
        err = err.max((got - want).abs());
    }
    Check::new("biaffine-mhs-loss", err < TOL, format!("max abs diff {err:.2e} over n = 4..16"))
}

pub fn run() -> Vec<Check> {
    let (a, b) = mlm_and_mts();
    let (c, d) = csp_checks();
    vec![a, b, c, d, mhs_check()]
}
