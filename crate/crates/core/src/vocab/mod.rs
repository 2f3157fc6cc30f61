//! In-domain WordPiece vocabulary: text normalization, pre-tokenization,
//! vocabulary induction, and greedy longest-match tokenization.
//!
//! The vocabulary file is UTF-8 with one token per line; the line index is
//! the token id. Lines 0–4 hold `[PAD]`, `[UNK]`, `[CLS]`, `[SEP]`, `[MASK]`.
//! Continuation pieces carry the `##` prefix.

mod normalize;
mod pretokenize;
mod tokenizer;
mod wordpiece;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub use normalize::{normalize_bytes, normalize_text};
pub use pretokenize::{is_cjk, is_emoji, pre_tokenize, UnitKind, WordUnit};
pub use tokenizer::{detokenize, display_pieces, tokenize, tokenize_units, wordpiece_unit, TokenizedUnit};
pub use wordpiece::{train_wordpiece, WordCounts};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const CONTINUATION: &str = "##";

/// Token ↔ id table. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds from a full token list whose first five entries are the specials.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_SPECIALS {
            return Err(Error::Vocab(format!("{} tokens, need at least the specials", tokens.len())));
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *s {
                return Err(Error::Vocab(format!("line {i} must be {s}, found {:?}", tokens[i])));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid token {t:?} at line {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token {t:?} at line {i}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Specials followed by `tokens` in the given order.
    pub fn with_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(|s| s.as_ref().to_string()));
        Vocab::from_tokens(all)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        Vocab::from_tokens(tokens)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref())?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Vocab("vocab file is not UTF-8".into()))?;
        Vocab::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of all non-special tokens.
    pub fn regular_ids(&self) -> std::ops::Range<u32> {
        NUM_SPECIALS as u32..self.tokens.len() as u32
    }
}
