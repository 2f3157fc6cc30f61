//! Corpus ingestion: reading, deduplication, sentence-aware chunking, word
//! segmentation for whole-word masking, and binary shard files.

mod chunk;
mod dedup;
mod segment;
mod shard;

pub use chunk::{chunk_document, chunk_tokens, tokenize_sentences, MAX_LEN, MIN_LEN};
pub use dedup::{dedup_documents, is_noise_line, Deduplicator};
pub use segment::{segment_words, Lexicon};
pub use shard::{
    preprocess, read_documents, vocab_digest, read_shard, read_shard_dir, write_shard, DocLayout, PreprocessOptions,
    PreprocessStats, ShardMeta, SHARD_FORMAT_VERSION,
};

/// A raw input document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: impl Into<String>) -> Self {
        Document { id: id.into(), text: text.into(), source: source.into() }
    }
}
