//! WordPiece vocabulary induction.
//!
//! Every pre-tokenized unit is a word. Words start as character sequences
//! (first character bare, later characters `##`-prefixed). Characters whose
//! form occurs fewer than `min_count` times are dropped and block merges
//! across them. The trainer then repeatedly merges the adjacent pair with the
//! highest likelihood gain `count(ab) / (count(a) · count(b))`, considering
//! only pairs seen at least `min_count` times, until the vocabulary reaches
//! `target_size` or no pair qualifies. Ties go to the lexicographically
//! smallest merged string, then the smallest `(a, b)` pair.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::pretokenize::pre_tokenize;
use super::{normalize_text, Vocab, CONTINUATION, SPECIAL_TOKENS};
use crate::error::{Error, Result};

/// Unit frequencies. Mergeable, so counting can be sharded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordCounts {
    counts: BTreeMap<String, u64>,
}

impl WordCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, doc: &str) {
        for unit in pre_tokenize(&normalize_text(doc)) {
            *self.counts.entry(unit.text).or_insert(0) += 1;
        }
    }

    pub fn from_documents<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut wc = WordCounts::new();
        for d in docs {
            wc.add_document(d.as_ref());
        }
        wc
    }

    pub fn merge(&mut self, other: &WordCounts) {
        for (w, c) in &other.counts {
            *self.counts.entry(w.clone()).or_insert(0) += c;
        }
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }
}

pub fn train_wordpiece<I, S>(docs: I, min_count: u64, target_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    WordCounts::from_documents(docs).train(min_count, target_size)
}

#[derive(Default)]
struct Symbols {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }
}

type Pair = (u32, u32);

struct Trainer {
    words: Vec<(Vec<Option<u32>>, u64)>,
    pair_counts: HashMap<Pair, u64>,
    pair_words: HashMap<Pair, BTreeSet<usize>>,
    sym_counts: HashMap<u32, u64>,
}

impl Trainer {
    fn add_word(&mut self, w: usize, sign_add: bool) {
        let (syms, count) = &self.words[w];
        let count = *count;
        for s in syms.iter().flatten() {
            let e = self.sym_counts.entry(*s).or_insert(0);
            if sign_add {
                *e += count;
            } else {
                *e -= count;
            }
        }
        for win in syms.windows(2) {
            if let (Some(a), Some(b)) = (win[0], win[1]) {
                let e = self.pair_counts.entry((a, b)).or_insert(0);
                if sign_add {
                    *e += count;
                    self.pair_words.entry((a, b)).or_default().insert(w);
                } else {
                    *e -= count;
                }
            }
        }
    }

    fn merge(&mut self, pair: Pair, merged: u32) {
        let affected: Vec<usize> =
            self.pair_words.remove(&pair).map(|s| s.into_iter().collect()).unwrap_or_default();
        for w in affected {
            self.add_word(w, false);
            let syms = &mut self.words[w].0;
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == Some(pair.0) && syms[i + 1] == Some(pair.1) {
                    out.push(Some(merged));
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            self.add_word(w, true);
        }
        self.pair_counts.retain(|_, c| *c > 0);
    }
}

fn merged_text(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

impl WordCounts {
    pub fn train(&self, min_count: u64, target_size: usize) -> Result<Vocab> {
        if min_count == 0 {
            return Err(Error::Vocab("min_count must be at least 1".into()));
        }
        if self.counts.is_empty() {
            return Err(Error::Vocab("empty corpus".into()));
        }

        let mut symbols = Symbols::default();
        let mut char_freq: BTreeMap<String, u64> = BTreeMap::new();
        for (word, &count) in &self.counts {
            for (i, c) in word.chars().enumerate() {
                let form = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                *char_freq.entry(form).or_insert(0) += count;
            }
        }
        let alphabet: Vec<String> =
            char_freq.iter().filter(|(_, &f)| f >= min_count).map(|(s, _)| s.clone()).collect();
        if SPECIAL_TOKENS.len() + alphabet.len() > target_size {
            return Err(Error::Vocab(format!(
                "target size {target_size} cannot hold {} specials and {} retained characters",
                SPECIAL_TOKENS.len(),
                alphabet.len()
            )));
        }
        let mut vocab_tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut in_vocab: BTreeSet<String> = BTreeSet::new();
        for a in &alphabet {
            symbols.intern(a);
            vocab_tokens.push(a.clone());
            in_vocab.insert(a.clone());
        }

        let words: Vec<(Vec<Option<u32>>, u64)> = self
            .counts
            .iter()
            .map(|(word, &count)| {
                let syms = word
                    .chars()
                    .enumerate()
                    .map(|(i, c)| {
                        let form = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                        symbols.index.get(&form).copied()
                    })
                    .collect();
                (syms, count)
            })
            .collect();

        let mut tr = Trainer {
            words,
            pair_counts: HashMap::new(),
            pair_words: HashMap::new(),
            sym_counts: HashMap::new(),
        };
        for w in 0..tr.words.len() {
            tr.add_word(w, true);
        }

        while vocab_tokens.len() < target_size {
            let mut best: Option<(Pair, u64, u128, String)> = None;
            for (&pair, &pc) in &tr.pair_counts {
                if pc < min_count {
                    continue;
                }
                let denom = tr.sym_counts[&pair.0] as u128 * tr.sym_counts[&pair.1] as u128;
                let text = merged_text(&symbols.names[pair.0 as usize], &symbols.names[pair.1 as usize]);
                let better = match &best {
                    None => true,
                    Some((bp, bpc, bden, btext)) => {
                        // pc/denom vs bpc/bden
                        match (pc as u128 * bden).cmp(&(*bpc as u128 * denom)) {
                            Ordering::Greater => true,
                            Ordering::Less => false,
                            Ordering::Equal => match text.cmp(btext) {
                                Ordering::Less => true,
                                Ordering::Greater => false,
                                Ordering::Equal => {
                                    let key = (&symbols.names[pair.0 as usize], &symbols.names[pair.1 as usize]);
                                    key < (&symbols.names[bp.0 as usize], &symbols.names[bp.1 as usize])
                                }
                            },
                        }
                    }
                };
                if better {
                    best = Some((pair, pc, denom, text));
                }
            }
            let Some((pair, _, _, text)) = best else { break };
            let merged = symbols.intern(&text);
            if in_vocab.insert(text.clone()) {
                vocab_tokens.push(text);
            }
            tr.merge(pair, merged);
        }

        Vocab::from_tokens(vocab_tokens)
    }
}
