use super::Document;
use crate::sequence::TokenSequence;
use crate::vocab::{tokenize_units, Vocab};

pub const MAX_LEN: usize = 512;
pub const MIN_LEN: usize = 32;

fn is_sentence_end(unit: &str) -> bool {
    // fullwidth ！？； fold to ASCII under normalization
    matches!(unit, "。" | "!" | "?" | ";" | "！" | "？" | "；")
}

/// Tokenizes a document into sentences. Boundaries are sentence-final
/// punctuation (kept with the sentence) and line breaks.
pub fn tokenize_sentences(text: &str, vocab: &Vocab) -> Vec<TokenSequence> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut cur = TokenSequence::default();
        for tu in tokenize_units(line, vocab) {
            for (i, &id) in tu.ids.iter().enumerate() {
                cur.ids.push(id);
                cur.word_start.push(i == 0);
            }
            if is_sentence_end(&tu.unit.text) {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Greedily packs whole sentences into chunks of at most `max_len` tokens.
/// A sentence longer than `max_len` is hard-split. Nothing is discarded, so
/// the concatenation of the output equals the concatenation of the input.
pub fn chunk_tokens(sentences: &[TokenSequence], max_len: usize) -> Vec<TokenSequence> {
    assert!(max_len > 0, "max_len must be positive");
    let mut chunks = Vec::new();
    let mut cur = TokenSequence::default();
    for sent in sentences {
        if sent.len() > max_len {
            if !cur.is_empty() {
                chunks.push(std::mem::take(&mut cur));
            }
            let mut start = 0;
            while sent.len() - start > max_len {
                chunks.push(sent.slice(start..start + max_len));
                start += max_len;
            }
            cur = sent.slice(start..sent.len());
            continue;
        }
        if cur.len() + sent.len() > max_len {
            chunks.push(std::mem::take(&mut cur));
        }
        cur.extend(sent);
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }
    chunks
}

/// Tokenizes and chunks a document, dropping chunks shorter than `min_len`.
pub fn chunk_document(doc: &Document, vocab: &Vocab, max_len: usize, min_len: usize) -> Vec<TokenSequence> {
    let sentences = tokenize_sentences(&doc.text, vocab);
    chunk_tokens(&sentences, max_len).into_iter().filter(|c| c.len() >= min_len).collect()
}
