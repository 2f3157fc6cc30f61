//! Input corruption for the generator and discriminator: whole-word masking,
//! generator-driven replacement, and candidate sets for multi-token selection.
//! Each original sequence is corrupted twice with independent draws.
//!
//! Positions index the content tokens of a [`TokenSequence`]; the caller adds
//! `[CLS]`/`[SEP]` around them when encoding.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sequence::TokenSequence;
use crate::vocab::{MASK, NUM_SPECIALS};

pub type CorruptionRng = ChaCha8Rng;

/// Tolerance on the total mass of a generator distribution.
pub const PROB_SUM_TOL: f64 = 1e-5;

/// Mixes a global seed with stream coordinates (step, sequence, view, ...)
/// into an independent seed, so results do not depend on processing order.
pub fn derive_seed(global: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(global), |h, &c| mix(h ^ mix(c)))
}

pub fn rng_for(global: u64, coords: &[u64]) -> CorruptionRng {
    CorruptionRng::seed_from_u64(derive_seed(global, coords))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

/// Whole words chosen for masking. `positions` is sorted and is exactly the
/// union of `words`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskPlan {
    pub positions: Vec<usize>,
    pub words: Vec<Range<usize>>,
}

impl MaskPlan {
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Samples words without replacement until at least `rate·n` tokens are
/// covered or no words remain.
pub fn select_mask_positions<R: Rng + ?Sized>(seq: &TokenSequence, rate: f64, rng: &mut R) -> Result<MaskPlan> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("mask rate {rate} outside [0, 1)")));
    }
    let target = (rate * seq.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut words = seq.words();
    words.shuffle(rng);
    let mut chosen = Vec::new();
    let mut covered = 0;
    for w in words {
        if covered >= target {
            break;
        }
        covered += w.len();
        chosen.push(w);
    }
    chosen.sort_by_key(|w| w.start);
    let positions = chosen.iter().flat_map(|w| w.clone()).collect();
    Ok(MaskPlan { positions, words: chosen })
}

/// Uniform non-special token.
fn random_token<R: Rng + ?Sized>(vocab_size: usize, rng: &mut R) -> u32 {
    rng.gen_range(NUM_SPECIALS as u32..vocab_size as u32)
}

/// Applies one 80/10/10 action per masked word. Returns `x^M` and the
/// action taken for each word of the plan.
pub fn build_masked_sequence<R: Rng + ?Sized>(
    seq: &TokenSequence,
    plan: &MaskPlan,
    vocab_size: usize,
    rng: &mut R,
) -> Result<(TokenSequence, Vec<MaskAction>)> {
    if vocab_size <= NUM_SPECIALS {
        return Err(Error::invalid("vocabulary has no regular tokens"));
    }
    let mut out = seq.clone();
    let mut actions = Vec::with_capacity(plan.words.len());
    for w in &plan.words {
        if w.end > seq.len() {
            return Err(Error::invalid(format!("masked word {w:?} beyond sequence of {}", seq.len())));
        }
        let u: f64 = rng.gen();
        let action = if u < 0.8 {
            MaskAction::Mask
        } else if u < 0.9 {
            MaskAction::Random
        } else {
            MaskAction::Keep
        };
        for t in w.clone() {
            match action {
                MaskAction::Mask => out.ids[t] = MASK,
                MaskAction::Random => out.ids[t] = random_token(vocab_size, rng),
                MaskAction::Keep => {}
            }
        }
        actions.push(action);
    }
    Ok((out, actions))
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::invalid("distribution has negative or non-finite mass"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::invalid(format!("distribution sums to {s}")));
    }
    Ok(())
}

/// Draws an index from `p` restricted to indices not in `excluded`,
/// renormalizing over what remains. Falls back to a uniform draw over the
/// remaining indices if they carry no mass.
fn draw_excluding<R: Rng + ?Sized>(p: &[f64], excluded: &[usize], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum::<f64>() - excluded.iter().map(|&i| p[i]).sum::<f64>();
    if total > 0.0 {
        let mut u = rng.gen::<f64>() * total;
        let mut last = None;
        for (i, &x) in p.iter().enumerate() {
            if x == 0.0 || excluded.contains(&i) {
                continue;
            }
            if u < x {
                return i;
            }
            u -= x;
            last = Some(i);
        }
        if let Some(i) = last {
            return i;
        }
    }
    let free: Vec<usize> = (0..p.len()).filter(|i| !excluded.contains(i)).collect();
    free[rng.gen_range(0..free.len())]
}

/// Samples `x̂_t ~ p_G` at every masked position. `gen_probs[i]` is the
/// distribution at `plan.positions[i]`.
pub fn sample_replacements<R: Rng + ?Sized>(
    original: &TokenSequence,
    gen_probs: &[Vec<f64>],
    plan: &MaskPlan,
    rng: &mut R,
) -> Result<(TokenSequence, Vec<bool>)> {
    if gen_probs.len() != plan.positions.len() {
        return Err(Error::invalid(format!(
            "{} distributions for {} masked positions",
            gen_probs.len(),
            plan.positions.len()
        )));
    }
    let mut out = original.clone();
    let mut flags = vec![false; original.len()];
    for (&t, p) in plan.positions.iter().zip(gen_probs) {
        check_distribution(p)?;
        let x = draw_excluding(p, &[], rng) as u32;
        out.ids[t] = x;
        flags[t] = x != original.ids[t];
    }
    Ok((out, flags))
}

/// For each masked position, `k` distinct non-original tokens drawn from the
/// generator distribution without replacement, plus the original. Each set
/// is sorted by id.
pub fn build_candidate_sets<R: Rng + ?Sized>(
    original: &TokenSequence,
    gen_probs: &[Vec<f64>],
    plan: &MaskPlan,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    if gen_probs.len() != plan.positions.len() {
        return Err(Error::invalid("distribution count does not match masked positions"));
    }
    let mut sets = Vec::with_capacity(plan.positions.len());
    for (&t, p) in plan.positions.iter().zip(gen_probs) {
        if p.len() < k + 1 {
            return Err(Error::invalid(format!("vocab of {} cannot supply {k} candidates", p.len())));
        }
        check_distribution(p)?;
        let x = original.ids[t] as usize;
        if x >= p.len() {
            return Err(Error::invalid(format!("token {x} outside distribution")));
        }
        let mut excluded = vec![x];
        for _ in 0..k {
            let c = draw_excluding(p, &excluded, rng);
            excluded.push(c);
        }
        let mut set: Vec<u32> = excluded.into_iter().map(|i| i as u32).collect();
        set.sort_unstable();
        sets.push(set);
    }
    Ok(sets)
}

/// First stage of a view: mask plan and `x^M`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedView {
    pub plan: MaskPlan,
    pub actions: Vec<MaskAction>,
    pub x_masked: TokenSequence,
}

/// One complete corruption of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionView {
    pub plan: MaskPlan,
    pub actions: Vec<MaskAction>,
    pub x_masked: TokenSequence,
    pub x_replaced: TokenSequence,
    pub replaced_flags: Vec<bool>,
    /// Candidate set for each entry of `plan.positions`.
    pub candidates: Vec<Vec<u32>>,
}

impl CorruptionView {
    /// Index of the original token within each candidate set.
    pub fn candidate_targets(&self, original: &TokenSequence) -> Vec<usize> {
        self.plan
            .positions
            .iter()
            .zip(&self.candidates)
            .map(|(&t, s)| s.iter().position(|&c| c == original.ids[t]).expect("original in candidate set"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionPair {
    pub views: [CorruptionView; 2],
}

pub fn mask_view<R: Rng + ?Sized>(
    seq: &TokenSequence,
    rate: f64,
    vocab_size: usize,
    rng: &mut R,
) -> Result<MaskedView> {
    let plan = select_mask_positions(seq, rate, rng)?;
    let (x_masked, actions) = build_masked_sequence(seq, &plan, vocab_size, rng)?;
    Ok(MaskedView { plan, actions, x_masked })
}

/// Second stage of a view, given generator distributions at the masked
/// positions.
pub fn complete_view<R: Rng + ?Sized>(
    masked: MaskedView,
    original: &TokenSequence,
    gen_probs: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<CorruptionView> {
    let (x_replaced, replaced_flags) = sample_replacements(original, gen_probs, &masked.plan, rng)?;
    let candidates = build_candidate_sets(original, gen_probs, &masked.plan, k, rng)?;
    Ok(CorruptionView {
        plan: masked.plan,
        actions: masked.actions,
        x_masked: masked.x_masked,
        x_replaced,
        replaced_flags,
        candidates,
    })
}

/// Runs mask → generator → replace → candidates once per view, each view
/// with its own RNG. `generator` maps `x^M` and the masked positions to one
/// distribution per position.
pub fn make_contrastive_pair<G>(
    seq: &TokenSequence,
    rate: f64,
    k: usize,
    vocab_size: usize,
    mut generator: G,
    rngs: [&mut CorruptionRng; 2],
) -> Result<CorruptionPair>
where
    G: FnMut(&TokenSequence, &[usize]) -> Result<Vec<Vec<f64>>>,
{
    let [r0, r1] = rngs;
    let mut one = |rng: &mut CorruptionRng| -> Result<CorruptionView> {
        let masked = mask_view(seq, rate, vocab_size, rng)?;
        let probs = generator(&masked.x_masked, &masked.plan.positions)?;
        complete_view(masked, seq, &probs, k, rng)
    };
    let a = one(r0)?;
    let b = one(r1)?;
    Ok(CorruptionPair { views: [a, b] })
}
