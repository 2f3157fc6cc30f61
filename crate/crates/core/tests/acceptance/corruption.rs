//! Monte Carlo statistics of the corruption engine.

use std::collections::BTreeSet;

use ehdiscrim_core::corpus::{MAX_LEN, MIN_LEN};
use ehdiscrim_core::corruption::{build_masked_sequence, sample_replacements, select_mask_positions, MaskAction, MaskPlan};
use ehdiscrim_core::vocab::{MASK, NUM_SPECIALS};
use ehdiscrim_core::TokenSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::Check;

const SAMPLES: usize = 10_000;
const VOCAB: usize = 60;

/// Word lengths 1..=4 pieces, skewed short like segmented Chinese text.
fn random_sequence(rng: &mut ChaCha8Rng, len: usize) -> TokenSequence {
    let mut ids = Vec::with_capacity(len);
    let mut ws = Vec::with_capacity(len);
    while ids.len() < len {
        let u: f64 = rng.gen();
        let wl = if u < 0.5 { 1 } else if u < 0.8 { 2 } else if u < 0.95 { 3 } else { 4 };
        for k in 0..wl.min(len - ids.len()) {
            ids.push(rng.gen_range(NUM_SPECIALS as u32..VOCAB as u32));
            ws.push(k == 0);
        }
    }
    TokenSequence::new(ids, ws).unwrap()
}

fn p_value(observed: &[u64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn atomicity_violations(seq: &TokenSequence, plan: &MaskPlan, x: &TokenSequence, actions: &[MaskAction]) -> usize {
    let words: BTreeSet<(usize, usize)> = seq.words().into_iter().map(|w| (w.start, w.end)).collect();
    let mut bad = 0;
    let covered: Vec<usize> = plan.words.iter().flat_map(|w| w.clone()).collect();
    if covered != plan.positions {
        bad += 1;
    }
    for (w, a) in plan.words.iter().zip(actions) {
        if !words.contains(&(w.start, w.end)) {
            bad += 1;
            continue;
        }
        let ok = match a {
            MaskAction::Mask => w.clone().all(|t| x.ids[t] == MASK),
            MaskAction::Keep => w.clone().all(|t| x.ids[t] == seq.ids[t]),
            MaskAction::Random => w.clone().all(|t| x.ids[t] as usize >= NUM_SPECIALS),
        };
        bad += usize::from(!ok);
    }
    let masked: BTreeSet<usize> = plan.positions.iter().copied().collect();
    bad += (0..seq.len()).filter(|t| !masked.contains(t) && x.ids[*t] != seq.ids[*t]).count();
    bad
}

pub fn run() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut frac_sum = 0.0;
    let mut actions = [0u64; 3];
    let mut words = 0u64;
    let mut violations = 0;
    let mut random_tokens = vec![0u64; VOCAB - NUM_SPECIALS];
    for _ in 0..SAMPLES {
        let len = rng.gen_range(MIN_LEN..=MAX_LEN - 2);
        let seq = random_sequence(&mut rng, len);
        let plan = select_mask_positions(&seq, 0.15, &mut rng).unwrap();
        frac_sum += plan.positions.len() as f64 / seq.len() as f64;
        let (x, acts) = build_masked_sequence(&seq, &plan, VOCAB, &mut rng).unwrap();
        violations += atomicity_violations(&seq, &plan, &x, &acts);
        for (w, a) in plan.words.iter().zip(&acts) {
            words += 1;
            actions[*a as usize] += 1;
            if *a == MaskAction::Random {
                for t in w.clone() {
                    random_tokens[x.ids[t] as usize - NUM_SPECIALS] += 1;
                }
            }
        }
    }
    let frac = frac_sum / SAMPLES as f64;
    let [fm, fr, fk] = actions.map(|c| c as f64 / words as f64);
    let actions_ok = (fm - 0.8).abs() <= 0.02 && (fr - 0.1).abs() <= 0.02 && (fk - 0.1).abs() <= 0.02;

    let n_random: u64 = random_tokens.iter().sum();
    let uniform = vec![n_random as f64 / random_tokens.len() as f64; random_tokens.len()];
    let p_random = p_value(&random_tokens, &uniform);

    // replacement sampling against a fixed generator distribution
    let k = 30;
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let n = 200;
    let seq = TokenSequence::new((0..n).map(|i| (i % k) as u32).collect(), vec![true; n]).unwrap();
    let plan = MaskPlan { positions: (0..n).collect(), words: (0..n).map(|i| i..i + 1).collect() };
    let dists = vec![p.clone(); n];
    let mut counts = vec![0u64; k];
    let mut flag_errors = 0;
    for _ in 0..SAMPLES / n {
        let (x, flags) = sample_replacements(&seq, &dists, &plan, &mut rng).unwrap();
        for t in 0..n {
            counts[x.ids[t] as usize] += 1;
            flag_errors += usize::from(flags[t] != (x.ids[t] != seq.ids[t]));
        }
    }
    let drawn: u64 = counts.iter().sum();
    let expected: Vec<f64> = p.iter().map(|q| q * drawn as f64).collect();
    let p_repl = p_value(&counts, &expected);

    vec![
        Check::new(
            "mask-fraction",
            (0.14..=0.17).contains(&frac),
            format!("mean {frac:.4} over {SAMPLES} plans, lengths {MIN_LEN}..={}", MAX_LEN - 2),
        ),
        Check::new(
            "word-actions",
            actions_ok,
            format!("mask {fm:.4} random {fr:.4} keep {fk:.4} over {words} words"),
        ),
        Check::new(
            "replacement-chi-square",
            p_repl > 0.01 && flag_errors == 0,
            format!("p = {p_repl:.3} over {drawn} draws, {k} bins; {flag_errors} flag errors"),
        ),
        Check::new(
            "random-action-chi-square",
            p_random > 0.01,
            format!("p = {p_random:.3} over {n_random} random-action tokens"),
        ),
        Check::new("whole-word-atomicity", violations == 0, format!("{violations} violations in {SAMPLES} samples")),
    ]
}
