use super::pretokenize::{pre_tokenize, UnitKind, WordUnit};
use super::{normalize_text, Vocab, CONTINUATION, UNK};
use crate::error::{Error, Result};
use crate::sequence::TokenSequence;

const MAX_UNIT_CHARS: usize = 100;

/// Pieces produced for one pre-tokenized unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedUnit {
    pub unit: WordUnit,
    pub ids: Vec<u32>,
}

/// Greedy longest-match-first segmentation of a single unit. `None` when
/// some position cannot be matched.
pub fn wordpiece_unit(unit: &str, vocab: &Vocab) -> Option<Vec<u32>> {
    let chars: Vec<char> = unit.chars().collect();
    if chars.is_empty() || chars.len() > MAX_UNIT_CHARS {
        return None;
    }
    let mut ids = Vec::new();
    let mut start = 0;
    let mut buf = String::new();
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            buf.clear();
            if start > 0 {
                buf.push_str(CONTINUATION);
            }
            buf.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&buf) {
                found = Some((id, end));
                break;
            }
        }
        let (id, end) = found?;
        ids.push(id);
        start = end;
    }
    Some(ids)
}

/// Normalizes, pre-tokenizes, and segments each unit.
pub fn tokenize_units(text: &str, vocab: &Vocab) -> Vec<TokenizedUnit> {
    pre_tokenize(&normalize_text(text))
        .into_iter()
        .map(|unit| {
            let ids = wordpiece_unit(&unit.text, vocab).unwrap_or_else(|| vec![UNK]);
            TokenizedUnit { unit, ids }
        })
        .collect()
}

pub fn tokenize(text: &str, vocab: &Vocab) -> TokenSequence {
    let mut ids = Vec::new();
    let mut word_start = Vec::new();
    for tu in tokenize_units(text, vocab) {
        for (i, id) in tu.ids.into_iter().enumerate() {
            ids.push(id);
            word_start.push(i == 0);
        }
    }
    TokenSequence { ids, word_start }
}

fn piece_kind(piece: &str) -> UnitKind {
    pre_tokenize(piece).first().map_or(UnitKind::Punct, |u| u.kind)
}

/// Joins pieces, stripping continuation prefixes. A space is inserted only
/// between two adjacent Latin/digit units.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocab) -> Result<String> {
    let mut out = String::new();
    let mut prev_spaced = false;
    for &id in &seq.ids {
        let piece = vocab
            .token(id)
            .ok_or_else(|| Error::Vocab(format!("id {id} out of range for vocab of {}", vocab.len())))?;
        if let Some(rest) = piece.strip_prefix(CONTINUATION) {
            out.push_str(rest);
            continue;
        }
        let spaced = !Vocab::is_special(id) && piece_kind(piece).is_spaced();
        if spaced && prev_spaced {
            out.push(' ');
        }
        out.push_str(piece);
        prev_spaced = spaced;
    }
    Ok(out)
}

/// Comma-separated piece display, e.g. `免, 疫, ihc`.
pub fn display_pieces(seq: &TokenSequence, vocab: &Vocab) -> String {
    seq.ids
        .iter()
        .map(|&id| vocab.token(id).unwrap_or("[UNK]"))
        .collect::<Vec<_>>()
        .join(", ")
}
