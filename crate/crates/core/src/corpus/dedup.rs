use std::collections::HashSet;

use sha2::{Digest, Sha256};

use super::Document;
use crate::vocab::{normalize_text, pre_tokenize, UnitKind};

/// A line with no content beyond whitespace and punctuation.
pub fn is_noise_line(line: &str) -> bool {
    pre_tokenize(&normalize_text(line)).iter().all(|u| u.kind == UnitKind::Punct)
}

/// Exact-duplicate filter keyed by the SHA-256 of normalized text. Noise
/// lines are stripped before hashing; documents left empty are dropped.
#[derive(Default)]
pub struct Deduplicator {
    seen: HashSet<[u8; 32]>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accept(&mut self, doc: Document) -> Option<Document> {
        let text = doc.text.lines().filter(|l| !is_noise_line(l)).collect::<Vec<_>>().join("\n");
        if text.is_empty() {
            return None;
        }
        let digest: [u8; 32] = Sha256::digest(normalize_text(&text).as_bytes()).into();
        if !self.seen.insert(digest) {
            return None;
        }
        Some(Document { text, ..doc })
    }
}

pub fn dedup_documents<I>(docs: I) -> impl Iterator<Item = Document>
where
    I: IntoIterator<Item = Document>,
{
    let mut d = Deduplicator::new();
    docs.into_iter().filter_map(move |doc| d.accept(doc))
}
