//! Discriminator losses never reach generator-only weights, and the MLM
//! loss never reaches discriminator-only weights.

use ehdiscrim_core::autodiff::{Gradients, Graph, ParamId, Real};
use ehdiscrim_core::model::ModelParams;
use ehdiscrim_core::pretrain::{forward_batch, TrainConfig};
use ehdiscrim_core::TokenSequence;

use crate::fixtures::{toy_model, toy_sequences, toy_train_config, TOY_VOCAB};
use crate::Check;

struct Split {
    leaked: Vec<String>,
    reached: usize,
    of: usize,
}

fn split<T: Real>(m: &ModelParams<T>, grads: &Gradients<T>, forbidden: &[ParamId], expected: &[ParamId]) -> Split {
    let leaked = forbidden.iter().filter(|&&id| !grads.is_zero(id)).map(|&id| m.store.get(id).name.clone()).collect();
    let reached = expected.iter().filter(|&&id| !grads.is_zero(id)).count();
    Split { leaked, reached, of: expected.len() }
}

fn contract<T: Real>(label: &str, m: &ModelParams<T>, seqs: &[TokenSequence], cfg: &TrainConfig, train: bool) -> Vec<Check> {
    let gen_only = m.layout.generator_exclusive();
    let disc_only = m.layout.discriminator_exclusive();
    let shared = m.layout.shared();
    let mut out = Vec::new();

    let mut g = Graph::new(&m.store);
    let l = forward_batch(m, &mut g, seqs, cfg, 3, train).unwrap();
    let d = l.discriminator_total(&mut g, cfg).unwrap();
    let grads = g.backward(d).unwrap();
    let s = split(m, &grads, &gen_only, &disc_only);
    let token_reached = !grads.is_zero(m.layout.token);
    out.push(Check::new(
        format!("{label}/disc-losses"),
        s.leaked.is_empty() && s.reached == s.of && token_reached,
        format!(
            "{} of {} generator-only params nonzero {:?}; {}/{} discriminator-only and the token table reached",
            s.leaked.len(),
            gen_only.len(),
            s.leaked,
            s.reached,
            s.of
        ),
    ));

    let mut g = Graph::new(&m.store);
    let l = forward_batch(m, &mut g, seqs, cfg, 3, train).unwrap();
    let grads = g.backward(l.mlm).unwrap();
    let s = split(m, &grads, &disc_only, &gen_only);
    let shared_reached = shared.iter().filter(|&&id| !grads.is_zero(id)).count();
    out.push(Check::new(
        format!("{label}/mlm-loss"),
        s.leaked.is_empty() && s.reached == s.of && shared_reached >= 2,
        format!(
            "{} of {} discriminator-only params nonzero {:?}; {}/{} generator-only and {}/3 shared reached",
            s.leaked.len(),
            disc_only.len(),
            s.leaked,
            s.reached,
            s.of,
            shared_reached
        ),
    ));
    out
}

pub fn run() -> Vec<Check> {
    let cfg = toy_train_config();
    let seqs = toy_sequences(3, 8..=12, TOY_VOCAB, 5);
    let m64 = toy_model(9, 0.3);
    let mut out = contract("toy-f64-eval", &m64, &seqs, &cfg, false);
    out.extend(contract("toy-f64-dropout", &m64, &seqs, &cfg, true));

    let desk = TrainConfig { dropout: 0.1, attention_dropout: 0.1, ..crate::desk::desk_config(2000) };
    let m32 = ModelParams::<f32>::init(&desk.model_config(160), desk.init_std, 1).unwrap();
    let seqs = toy_sequences(8, 30..=62, 160, 6);
    out.extend(contract("desk-f32-dropout", &m32, &seqs, &desk, true));
    out
}
