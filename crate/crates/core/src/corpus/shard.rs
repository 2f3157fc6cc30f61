//! Shard files hold serialized [`TokenSequence`]s:
//!
//! ```text
//! u32 count
//! repeated count times:
//!   u32 length
//!   u32 ids[length]
//!   u8  word_start bits[ceil(length / 8)]   (bit i of byte i/8, LSB first)
//! ```
//!
//! All integers are little-endian. A `shards.meta` text file next to the
//! shards records the vocabulary they were built with.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{chunk_document, dedup_documents, segment_words, Document, Lexicon};
use crate::error::{Error, Result};
use crate::sequence::TokenSequence;
use crate::vocab::Vocab;

/// Revision of the shard layout above.
pub const SHARD_FORMAT_VERSION: u32 = 1;

pub fn write_shard<W: Write>(w: &mut W, seqs: &[TokenSequence]) -> Result<()> {
    w.write_all(&(seqs.len() as u32).to_le_bytes())?;
    for s in seqs {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        for &id in &s.ids {
            w.write_all(&id.to_le_bytes())?;
        }
        let mut bits = vec![0u8; s.len().div_ceil(8)];
        for (i, &f) in s.word_start.iter().enumerate() {
            if f {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bits)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated shard: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_shard<R: Read>(r: &mut R) -> Result<Vec<TokenSequence>> {
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut ids = Vec::with_capacity(len);
        for _ in 0..len {
            ids.push(read_u32(r)?);
        }
        let mut bits = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bits).map_err(|e| Error::Format(format!("truncated shard: {e}")))?;
        let word_start = (0..len).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
        out.push(TokenSequence { ids, word_start });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after shard".into()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DocLayout {
    /// One document per line.
    PerLine,
    /// Documents separated by blank lines.
    BlankSeparated,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.is_file() {
            out.push(p);
        }
    }
    Ok(())
}

/// Reads every file under `dir` (sorted, recursive) as UTF-8 text.
pub fn read_documents(dir: impl AsRef<Path>, layout: DocLayout) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    if dir.is_file() {
        files.push(dir.to_path_buf());
    } else {
        collect_files(dir, &mut files)?;
    }
    let mut docs = Vec::new();
    for f in files {
        let bytes = fs::read(&f)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is not valid UTF-8", f.display())))?;
        let source = f.strip_prefix(dir).unwrap_or(&f).display().to_string();
        let blocks: Vec<String> = match layout {
            DocLayout::PerLine => text.lines().map(str::to_string).collect(),
            DocLayout::BlankSeparated => {
                let mut blocks = Vec::new();
                let mut cur: Vec<&str> = Vec::new();
                for line in text.lines() {
                    if line.trim().is_empty() {
                        if !cur.is_empty() {
                            blocks.push(cur.join("\n"));
                            cur.clear();
                        }
                    } else {
                        cur.push(line);
                    }
                }
                if !cur.is_empty() {
                    blocks.push(cur.join("\n"));
                }
                blocks
            }
        };
        for (i, b) in blocks.into_iter().enumerate() {
            if !b.trim().is_empty() {
                docs.push(Document::new(format!("{source}:{i}"), b, source.clone()));
            }
        }
    }
    Ok(docs)
}

#[derive(Clone, Debug)]
pub struct PreprocessOptions {
    pub layout: DocLayout,
    pub max_len: usize,
    pub min_len: usize,
    pub lexicon: Option<Lexicon>,
    pub sequences_per_shard: usize,
    pub threads: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            layout: DocLayout::PerLine,
            max_len: super::MAX_LEN,
            min_len: super::MIN_LEN,
            lexicon: None,
            sequences_per_shard: 4096,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreprocessStats {
    pub documents_read: usize,
    pub documents_kept: usize,
    pub sequences: usize,
    pub tokens: usize,
    pub shards: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardMeta {
    pub vocab_size: usize,
    pub vocab_sha256: String,
    pub sequences: usize,
    pub shards: usize,
}

pub fn vocab_digest(vocab: &Vocab) -> String {
    Sha256::digest(vocab.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl ShardMeta {
    pub fn to_text(&self) -> String {
        format!(
            "vocab_size = {}\nvocab_sha256 = {}\nsequences = {}\nshards = {}\n",
            self.vocab_size, self.vocab_sha256, self.sequences, self.shards
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = ShardMeta { vocab_size: 0, vocab_sha256: String::new(), sequences: 0, shards: 0 };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad meta line {line:?}")))?;
            let v = v.trim();
            let num = || v.parse::<usize>().map_err(|_| Error::Format(format!("bad number {v:?}")));
            match k.trim() {
                "vocab_size" => meta.vocab_size = num()?,
                "vocab_sha256" => meta.vocab_sha256 = v.to_string(),
                "sequences" => meta.sequences = num()?,
                "shards" => meta.shards = num()?,
                other => return Err(Error::Format(format!("unknown meta key {other}"))),
            }
        }
        Ok(meta)
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if self.vocab_size != vocab.len() || self.vocab_sha256 != vocab_digest(vocab) {
            return Err(Error::Format(format!(
                "shards were built with a vocab of {} tokens, got {}",
                self.vocab_size,
                vocab.len()
            )));
        }
        Ok(())
    }
}

fn process_docs(docs: &[Document], vocab: &Vocab, opts: &PreprocessOptions) -> Vec<TokenSequence> {
    docs.iter()
        .flat_map(|d| chunk_document(d, vocab, opts.max_len, opts.min_len))
        .map(|c| segment_words(&c, vocab, opts.lexicon.as_ref()))
        .collect()
}

/// Reads, deduplicates, chunks, and segments a corpus, writing shards and
/// `shards.meta` into `output`. Output is identical for any thread count.
pub fn preprocess(
    input: impl AsRef<Path>,
    vocab: &Vocab,
    output: impl AsRef<Path>,
    opts: &PreprocessOptions,
) -> Result<PreprocessStats> {
    let raw = read_documents(input, opts.layout)?;
    let documents_read = raw.len();
    let docs: Vec<Document> = dedup_documents(raw).collect();

    let threads = opts.threads.max(1).min(docs.len().max(1));
    let block = docs.len().div_ceil(threads).max(1);
    let seqs: Vec<TokenSequence> = if threads == 1 {
        process_docs(&docs, vocab, opts)
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                docs.chunks(block).map(|part| s.spawn(move || process_docs(part, vocab, opts))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let output = output.as_ref();
    fs::create_dir_all(output)?;
    let per = opts.sequences_per_shard.max(1);
    let mut shards = 0;
    for (i, part) in seqs.chunks(per).enumerate() {
        let mut w = BufWriter::new(fs::File::create(output.join(format!("shard-{i:05}.bin")))?);
        write_shard(&mut w, part)?;
        w.flush()?;
        shards += 1;
    }
    let meta = ShardMeta {
        vocab_size: vocab.len(),
        vocab_sha256: vocab_digest(vocab),
        sequences: seqs.len(),
        shards,
    };
    fs::write(output.join("shards.meta"), meta.to_text())?;
    Ok(PreprocessStats {
        documents_read,
        documents_kept: docs.len(),
        sequences: seqs.len(),
        tokens: seqs.iter().map(TokenSequence::len).sum(),
        shards,
    })
}

/// Loads all `shard-*.bin` files of a directory in name order.
pub fn read_shard_dir(dir: impl AsRef<Path>) -> Result<(ShardMeta, Vec<TokenSequence>)> {
    let dir = dir.as_ref();
    let meta = ShardMeta::parse(&fs::read_to_string(dir.join("shards.meta"))?)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("shard-") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    let mut seqs = Vec::new();
    for f in files {
        let mut r = BufReader::new(fs::File::open(&f)?);
        seqs.extend(read_shard(&mut r)?);
    }
    if seqs.len() != meta.sequences {
        return Err(Error::Format(format!("meta says {} sequences, found {}", meta.sequences, seqs.len())));
    }
    Ok((meta, seqs))
}
