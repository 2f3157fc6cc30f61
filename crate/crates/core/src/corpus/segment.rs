use std::collections::HashSet;
use std::path::Path;

use crate::error::Result;
use crate::sequence::TokenSequence;
use crate::vocab::{is_cjk, Vocab, CONTINUATION};

/// Word list for forward maximum matching over Chinese characters.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    words: HashSet<String>,
    max_chars: usize,
}

impl Lexicon {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon::default();
        for w in words {
            let w = w.as_ref().trim();
            let n = w.chars().count();
            if n >= 2 {
                lex.max_chars = lex.max_chars.max(n);
                lex.words.insert(w.to_string());
            }
        }
        lex
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Lexicon::from_words(text.lines()))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn cjk_char(piece: &str) -> Option<char> {
    let mut it = piece.chars();
    match (it.next(), it.next()) {
        (Some(c), None) if is_cjk(c) => Some(c),
        _ => None,
    }
}

/// Recomputes word boundaries. Continuation pieces always join the previous
/// word. Runs of single-character Chinese tokens are grouped by forward
/// maximum matching against `lexicon`; without one, each character is a word.
pub fn segment_words(seq: &TokenSequence, vocab: &Vocab, lexicon: Option<&Lexicon>) -> TokenSequence {
    let n = seq.len();
    let pieces: Vec<&str> = seq.ids.iter().map(|&id| vocab.token(id).unwrap_or("[UNK]")).collect();
    let mut word_start: Vec<bool> = pieces.iter().map(|p| !p.starts_with(CONTINUATION)).collect();
    if let Some(first) = word_start.first_mut() {
        *first = true;
    }

    if let Some(lex) = lexicon.filter(|l| !l.is_empty()) {
        let chars: Vec<Option<char>> = pieces.iter().map(|p| cjk_char(p)).collect();
        let mut i = 0;
        while i < n {
            if chars[i].is_none() {
                i += 1;
                continue;
            }
            let mut run_end = i;
            while run_end < n && chars[run_end].is_some() {
                run_end += 1;
            }
            let mut p = i;
            while p < run_end {
                let max = lex.max_chars.min(run_end - p);
                let mut len = 1;
                for l in (2..=max).rev() {
                    let cand: String = chars[p..p + l].iter().map(|c| c.unwrap()).collect();
                    if lex.contains(&cand) {
                        len = l;
                        break;
                    }
                }
                word_start[p] = true;
                for flag in &mut word_start[p + 1..p + len] {
                    *flag = false;
                }
                p += len;
            }
            i = run_end;
        }
    }
    TokenSequence { ids: seq.ids.clone(), word_start }
}
