//! Central finite differences at 64-bit for every differentiable graph op
//! and for the four pre-training losses on a toy model.

use std::time::Instant;

use ehdiscrim_core::autodiff::{grad_check, grad_check_sampled, GradCheckReport, Graph, ParamStore, Tensor, Var};
use ehdiscrim_core::model::{Encoding, Mode, ModelParams, Stack};
use ehdiscrim_core::pretrain::{forward_batch, loss_csp, loss_mlm, loss_mts, loss_rtd};
use ehdiscrim_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{toy_model, toy_sequences, toy_train_config, TOY_VOCAB};
use crate::Check;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;
const BUDGET_SECS: f64 = 120.0;

type OpFn = fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>;

fn ops() -> Vec<(&'static str, Vec<Vec<usize>>, OpFn)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |g, v| g.matmul(v[0], v[1])),
        ("matmul_bt", vec![vec![3, 4], vec![5, 4]], |g, v| g.matmul_bt(v[0], v[1])),
        ("transpose", vec![vec![3, 5]], |g, v| g.transpose(v[0])),
        ("add", vec![vec![3, 4], vec![3, 4]], |g, v| g.add(v[0], v[1])),
        ("sub", vec![vec![3, 4], vec![3, 4]], |g, v| g.sub(v[0], v[1])),
        ("mul", vec![vec![3, 4], vec![3, 4]], |g, v| g.mul(v[0], v[1])),
        ("add_row", vec![vec![3, 4], vec![4]], |g, v| g.add_row(v[0], v[1])),
        ("scale", vec![vec![3, 4]], |g, v| g.scale(v[0], -1.7)),
        ("gelu", vec![vec![4, 5]], |g, v| g.gelu(v[0])),
        ("softmax_rows", vec![vec![3, 6]], |g, v| g.softmax_rows(v[0])),
        ("log_softmax_rows", vec![vec![3, 6]], |g, v| g.log_softmax_rows(v[0])),
        ("layer_norm", vec![vec![4, 6], vec![6], vec![6]], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)),
        ("gather_rows", vec![vec![5, 3]], |g, v| g.gather_rows(v[0], &[4, 0, 4, 2, 1, 4])),
        ("slice_cols", vec![vec![3, 6]], |g, v| g.slice_cols(v[0], 2, 3)),
        ("concat_cols", vec![vec![3, 2], vec![3, 4]], |g, v| g.concat_cols(&[v[0], v[1], v[0]])),
        ("slice_rows", vec![vec![6, 3]], |g, v| g.slice_rows(v[0], 1, 4)),
        ("concat_rows", vec![vec![2, 3], vec![4, 3]], |g, v| g.concat_rows(&[v[1], v[0], v[1]])),
        ("sum_all", vec![vec![3, 4]], |g, v| g.sum_all(v[0])),
        ("sum_cols", vec![vec![3, 4]], |g, v| g.sum_cols(v[0])),
        ("reshape", vec![vec![3, 4]], |g, v| g.reshape(v[0], &[2, 6])),
        ("pick_cols", vec![vec![4, 5]], |g, v| g.pick_cols(v[0], &[0, 4, 2, 2])),
        ("normalize_rows", vec![vec![3, 5]], |g, v| g.normalize_rows(v[0])),
        ("bce_with_logits", vec![vec![7]], |g, v| g.bce_with_logits(v[0], &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0])),
    ]
}

/// Checks `sum(w ⊙ op(params))` for a fixed random weight tensor `w`.
fn check_op(shapes: &[Vec<usize>], op: OpFn, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    for (i, s) in shapes.iter().enumerate() {
        let n = s.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        store.insert(&format!("p{i}"), Tensor::new(s.clone(), data)?, true)?;
    }
    let out_shape = {
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = store.ids().map(|id| g.param(id)).collect();
        let y = op(&mut g, &vars)?;
        g.shape(y).to_vec()
    };
    let n: usize = out_shape.iter().product();
    let w = Tensor::new(out_shape, (0..n).map(|_| rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 }).collect())?;
    grad_check(&store, EPS, |g| {
        let vars: Vec<Var> = store.ids().map(|id| g.param(id)).collect();
        let y = op(g, &vars)?;
        let c = g.constant(w.clone())?;
        let p = g.mul(y, c)?;
        g.sum_all(p)
    })
}

struct Fixed {
    masked: Vec<Encoding>,
    mlm_rows: Vec<(usize, usize)>,
    mlm_targets: Vec<usize>,
    replaced: Vec<Encoding>,
    rtd_rows: Vec<(usize, usize)>,
    original: Vec<bool>,
    mts_rows: Vec<(usize, usize)>,
    mts_sets: Vec<Vec<u32>>,
    mts_targets: Vec<usize>,
}

/// Corruptions are drawn once and then held fixed, so the finite
/// differences see a smooth function of the parameters.
fn fixed_inputs(model: &ModelParams<f64>) -> Fixed {
    let cfg = toy_train_config();
    let seqs = toy_sequences(3, 8..=12, TOY_VOCAB, 21);
    let mut g = Graph::new(&model.store);
    let l = forward_batch(model, &mut g, &seqs, &cfg, 0, false).unwrap();
    let mut f = Fixed {
        masked: Vec::new(),
        mlm_rows: Vec::new(),
        mlm_targets: Vec::new(),
        replaced: Vec::new(),
        rtd_rows: Vec::new(),
        original: Vec::new(),
        mts_rows: Vec::new(),
        mts_sets: Vec::new(),
        mts_targets: Vec::new(),
    };
    for (i, v) in l.views.iter().enumerate() {
        let orig = &seqs[i / 2];
        f.masked.push(Encoding::single(&v.x_masked.ids));
        f.replaced.push(Encoding::single(&v.x_replaced.ids));
        let tg = v.candidate_targets(orig);
        for (j, &t) in v.plan.positions.iter().enumerate() {
            f.mlm_rows.push((i, t + 1));
            f.mlm_targets.push(orig.ids[t] as usize);
            f.mts_rows.push((i, t + 1));
            f.mts_sets.push(v.candidates[j].clone());
            f.mts_targets.push(tg[j]);
        }
        for t in 0..orig.len() {
            f.rtd_rows.push((i, t + 1));
            f.original.push(!v.replaced_flags[t]);
        }
    }
    f
}

fn loss_checks(model: &ModelParams<f64>) -> Vec<(&'static str, Result<GradCheckReport>)> {
    let fx = fixed_inputs(model);
    let store = &model.store;
    let rows = |enc: &ehdiscrim_core::model::Encoded, r: &[(usize, usize)]| -> Vec<usize> {
        r.iter().map(|&(s, p)| enc.row(s, p)).collect()
    };
    let max = 24;
    vec![
        (
            "L_MLM",
            grad_check_sampled(store, EPS, max, |g| {
                let e = model.encode(g, &fx.masked, Stack::Generator, &mut Mode::Eval)?;
                let h = g.gather_rows(e.hidden, &rows(&e, &fx.mlm_rows))?;
                let z = model.mlm_logits(g, h)?;
                loss_mlm(g, z, &fx.mlm_targets)
            }),
        ),
        (
            "L_RTD",
            grad_check_sampled(store, EPS, max, |g| {
                let e = model.encode(g, &fx.replaced, Stack::Discriminator, &mut Mode::Eval)?;
                let h = g.gather_rows(e.hidden, &rows(&e, &fx.rtd_rows))?;
                let z = model.rtd_logits(g, h)?;
                loss_rtd(g, z, &fx.original)
            }),
        ),
        (
            "L_MTS",
            grad_check_sampled(store, EPS, max, |g| {
                let e = model.encode(g, &fx.replaced, Stack::Discriminator, &mut Mode::Eval)?;
                let h = g.gather_rows(e.hidden, &rows(&e, &fx.mts_rows))?;
                let z = model.mts_logits(g, h, &fx.mts_sets)?;
                loss_mts(g, Some(z), &fx.mts_targets)
            }),
        ),
        (
            "L_CSP",
            grad_check_sampled(store, EPS, max, |g| {
                let e = model.encode(g, &fx.replaced, Stack::Discriminator, &mut Mode::Eval)?;
                let u = model.csp_embed(g, &e)?;
                loss_csp(g, u, 0.07)
            }),
        ),
    ]
}

fn report(name: &str, r: Result<GradCheckReport>) -> Check {
    match r {
        Ok(r) => Check::new(
            name,
            r.passes(TOL) && r.coords > 0,
            format!("max rel err {:.2e} over {} coords (worst {:?})", r.max_rel_error, r.coords, r.worst),
        ),
        Err(e) => Check::new(name, false, format!("error: {e}")),
    }
}

pub fn run() -> Vec<Check> {
    let t = Instant::now();
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    let list = ops();
    for (i, (name, shapes, op)) in list.iter().enumerate() {
        match check_op(shapes, *op, 100 + i as u64) {
            Ok(r) if r.passes(TOL) => worst = worst.max(r.max_rel_error),
            Ok(r) => failed.push(format!("{name} ({:.2e})", r.max_rel_error)),
            Err(e) => failed.push(format!("{name} ({e})")),
        }
    }
    out.push(Check::new(
        "ops",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} ops, max rel err {worst:.2e}", list.len())
        } else {
            format!("failing: {}", failed.join(", "))
        },
    ));

    let model = toy_model(3, 0.3);
    let cfg = model.config.clone();
    out.push(Check::new(
        "toy-shape",
        cfg.layers == 2 && cfg.hidden <= 48 && cfg.vocab_size <= 50,
        format!("layers {} hidden {} heads {} vocab {}", cfg.layers, cfg.hidden, cfg.heads, cfg.vocab_size),
    ));
    for (name, r) in loss_checks(&model) {
        out.push(report(name, r));
    }
    let secs = t.elapsed().as_secs_f64();
    out.push(Check::new("runtime", secs < BUDGET_SECS, format!("{secs:.1}s (limit {BUDGET_SECS}s)")));
    out
}
