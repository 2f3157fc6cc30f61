//! The four pre-training losses as graph operations. Each returns a scalar
//! node; inputs are logits so every log-probability is computed through a
//! log-sum-exp.

use super::config::TrainConfig;
use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// Score added to an anchor's similarity with itself so it drops out of
/// the contrastive softmax (`exp` underflows to exactly 0).
const SELF_EXCLUSION: f64 = -1e4;

fn neg_sum_picked<T: Real>(g: &mut Graph<'_, T>, logits: Var, targets: &[usize]) -> Result<Var> {
    let lp = g.log_softmax_rows(logits)?;
    let picked = g.pick_cols(lp, targets)?;
    let s = g.sum_all(picked)?;
    g.scale(s, -T::one())
}

pub fn zero<T: Real>(g: &mut Graph<'_, T>) -> Result<Var> {
    g.constant(Tensor::scalar(T::zero()))
}

/// `Σ_t −log p_G(x_t | x^M)` over masked positions. `logits` has one row
/// per masked position over the vocabulary.
pub fn loss_mlm<T: Real>(g: &mut Graph<'_, T>, logits: Var, targets: &[usize]) -> Result<Var> {
    if targets.is_empty() {
        return zero(g);
    }
    neg_sum_picked(g, logits, targets)
}

/// Binary cross-entropy summed over all positions; `original[t]` is the
/// label (true = token is original) and `logits[t] = wᵀh_t`.
pub fn loss_rtd<T: Real>(g: &mut Graph<'_, T>, logits: Var, original: &[bool]) -> Result<Var> {
    let labels: Vec<T> = original.iter().map(|&o| if o { T::one() } else { T::zero() }).collect();
    g.bce_with_logits(logits, &labels)
}

/// `Σ −log p_D(x_t | x^R, S_t)` over replaced positions. `logits` has one
/// row per replaced position over its candidate set; `targets` index the
/// original token within each set.
pub fn loss_mts<T: Real>(g: &mut Graph<'_, T>, logits: Option<Var>, targets: &[usize]) -> Result<Var> {
    match logits {
        None => zero(g),
        Some(z) => neg_sum_picked(g, z, targets),
    }
}

/// Contrastive loss over `2B` unit embeddings stored so that rows `2b` and
/// `2b+1` are the two views of sequence `b`. Each anchor is scored against
/// its sibling (the positive) and the `2(B−1)` views of other sequences;
/// the result is the mean over all `2B` anchors.
pub fn loss_csp<T: Real>(g: &mut Graph<'_, T>, emb: Var, tau: f64) -> Result<Var> {
    let n = g.shape(emb)[0];
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid(format!("contrastive batch needs 2B rows, got {n}")));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let logits = contrastive_logits(g, emb, tau)?;
    let partner: Vec<usize> = (0..n).map(|i| i ^ 1).collect();
    let s = neg_sum_picked(g, logits, &partner)?;
    g.scale(s, T::from_f64c(1.0 / n as f64))
}

/// `s(u,v)/τ` for all pairs, with each anchor's self-similarity removed.
pub fn contrastive_logits<T: Real>(g: &mut Graph<'_, T>, emb: Var, tau: f64) -> Result<Var> {
    let n = g.shape(emb)[0];
    let sim = g.matmul_bt(emb, emb)?;
    let scaled = g.scale(sim, T::from_f64c(1.0 / tau))?;
    let mut mask = Tensor::zeros(&[n, n]);
    for i in 0..n {
        mask.data_mut()[i * n + i] = T::from_f64c(SELF_EXCLUSION);
    }
    let mask = g.constant(mask)?;
    g.add(scaled, mask)
}

/// The four loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub mlm: f64,
    pub rtd: f64,
    pub mts: f64,
    pub csp: f64,
}

/// `L_MLM + λ1·L_RTD + λ2·L_MTS + λ3·L_CSP`.
pub fn combined_loss(parts: &LossParts, cfg: &TrainConfig) -> f64 {
    parts.mlm + cfg.lambda1 * parts.rtd + cfg.lambda2 * parts.mts + cfg.lambda3 * parts.csp
}

pub fn combine_vars<T: Real>(g: &mut Graph<'_, T>, terms: &[(Var, f64)]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(v, w) in terms {
        if w == 0.0 {
            continue;
        }
        let s = if w == 1.0 { v } else { g.scale(v, T::from_f64c(w))? };
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s)?,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => zero(g),
    }
}
