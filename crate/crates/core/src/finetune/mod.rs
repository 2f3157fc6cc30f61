//! Fine-tuning: task heads and decoders, input packing, EMA, metrics, and
//! the task training loop.

mod classify;
mod config;
mod data;
mod ema;
mod metrics;
mod mhs;
mod runner;
mod tags;

pub use classify::{bigram_jaccard, cdn_candidates, choose, pack_choice, pack_pair, truncate_segments, NUM_CHOICES};
pub use config::{FinetuneConfig, Task, TaskKind, TuningRanges};
pub use data::{parse_jsonl, read_jsonl, score, write_jsonl, Record, TripleRecord, POSITIVE_LABEL};
pub use ema::Ema;
pub use metrics::{accuracy, macro_f1, micro_f1, precision_at_1, MetricKind};
pub use mhs::{
    cell_labels, decode_pointers, mhs_decode, mhs_forward, mhs_loss, pointer_labels, MhsHead, MhsLogits, MhsProbs,
    RelationSchema, RelationTriple, RelationType,
};
pub use runner::{read_terminology, resolve_labels, EpochRecord, Head, Instance, Output, Target, TaskModel};
pub use tags::{mean_cross_entropy, tagging_loss, EntitySpan, Stream, TagScheme, CMEEE_OTHER_TYPES, SYMPTOM_TYPE};
