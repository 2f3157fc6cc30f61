//! Classification inputs: pair and multiple-choice packing, the answer
//! choice rule, and candidate retrieval for term normalization.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::Encoding;
use crate::vocab::{normalize_text, CLS, SEP};

pub const NUM_CHOICES: usize = 5;

/// Pops tokens from the tail of the longest segment (the later one on a
/// tie) until all segments fit in `budget` tokens.
pub fn truncate_segments(segs: &mut [Vec<u32>], budget: usize) {
    while segs.iter().map(Vec::len).sum::<usize>() > budget {
        let mut longest = 0;
        for (i, s) in segs.iter().enumerate() {
            if s.len() >= segs[longest].len() {
                longest = i;
            }
        }
        segs[longest].pop();
    }
}

fn pack(segs: Vec<Vec<u32>>, max_len: usize) -> Result<Encoding> {
    let overhead = 1 + segs.len();
    if max_len <= overhead {
        return Err(Error::invalid(format!("max length {max_len} leaves no room for content")));
    }
    let mut segs = segs;
    truncate_segments(&mut segs, max_len - overhead);
    let mut ids = vec![CLS];
    let mut segments = vec![0];
    for (k, s) in segs.iter().enumerate() {
        let seg = u32::from(k > 0);
        ids.extend(s);
        ids.push(SEP);
        segments.extend(std::iter::repeat(seg).take(s.len() + 1));
    }
    Ok(Encoding::new(ids, segments))
}

/// `[CLS] a [SEP] b [SEP]` with segment 0 through the first `[SEP]` and 1
/// after it.
pub fn pack_pair(a: &[u32], b: &[u32], max_len: usize) -> Result<Encoding> {
    pack(vec![a.to_vec(), b.to_vec()], max_len)
}

/// `[CLS] answer [SEP] question [SEP] evidence [SEP]`; segment 1 covers
/// question and evidence.
pub fn pack_choice(answer: &[u32], question: &[u32], evidence: &[u32], max_len: usize) -> Result<Encoding> {
    pack(vec![answer.to_vec(), question.to_vec(), evidence.to_vec()], max_len)
}

/// Index (0-based) of the most probable candidate; the lowest index wins
/// ties.
pub fn choose(probs: &[f64]) -> Result<usize> {
    if probs.len() != NUM_CHOICES {
        return Err(Error::invalid(format!("expected {NUM_CHOICES} candidates, got {}", probs.len())));
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(best)
}

fn bigrams(s: &str) -> BTreeSet<String> {
    let chars: Vec<char> = normalize_text(s).chars().filter(|c| !c.is_whitespace()).collect();
    if chars.len() < 2 {
        return chars.iter().map(|c| c.to_string()).collect();
    }
    chars.windows(2).map(|w| w.iter().collect()).collect()
}

/// Jaccard similarity of the character-bigram sets of the normalized
/// strings. A one-character string is its own single gram.
pub fn bigram_jaccard(a: &str, b: &str) -> f64 {
    let (x, y) = (bigrams(a), bigrams(b));
    let union = x.union(&y).count();
    if union == 0 {
        return 0.0;
    }
    x.intersection(&y).count() as f64 / union as f64
}

/// The `top_n` terminology entries most similar to `term`, best first;
/// equal scores are ordered lexicographically. Duplicates count once.
pub fn cdn_candidates(term: &str, terminology: &[String], top_n: usize) -> Result<Vec<(String, f64)>> {
    if terminology.is_empty() {
        return Err(Error::invalid("empty terminology"));
    }
    let uniq: BTreeSet<&String> = terminology.iter().collect();
    let mut scored: Vec<(String, f64)> = uniq.into_iter().map(|t| (t.clone(), bigram_jaccard(term, t))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_n);
    Ok(scored)
}
