use crate::error::{Error, Result};

/// Token ids with word-boundary flags. `word_start[i]` is true at the first
/// piece of each word.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub word_start: Vec<bool>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, word_start: Vec<bool>) -> Result<Self> {
        if ids.len() != word_start.len() {
            return Err(Error::invalid(format!(
                "{} ids but {} word_start flags",
                ids.len(),
                word_start.len()
            )));
        }
        if !ids.is_empty() && !word_start[0] {
            return Err(Error::invalid("word_start[0] must be true"));
        }
        Ok(TokenSequence { ids, word_start })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Half-open token ranges of each word.
    pub fn words(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.word_start[i] {
                if i > start {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TokenSequence {
        let mut word_start = self.word_start[range.clone()].to_vec();
        if let Some(first) = word_start.first_mut() {
            *first = true;
        }
        TokenSequence { ids: self.ids[range].to_vec(), word_start }
    }

    pub fn extend(&mut self, other: &TokenSequence) {
        self.ids.extend_from_slice(&other.ids);
        self.word_start.extend_from_slice(&other.word_start);
    }
}
