//! Pre-training: the four losses, their weighted combination, the learning
//! rate schedule, Adam, and the training loop.
//!
//! The discriminator reads the generator's samples as plain token ids, so
//! its losses reach the generator only through the shared embedding tables.

mod config;
mod loss;
mod optim;
mod trainer;

pub use config::{Ablation, TrainConfig};
pub use loss::{combine_vars, combined_loss, contrastive_logits, loss_csp, loss_mlm, loss_mts, loss_rtd, LossParts};
pub use optim::{lr_at, Adam, AdamConfig};
pub use trainer::{
    evaluate, forward_batch, run_pretraining, BatchLosses, BatchStats, RunOptions, RunSummary, StepRecord, Trainer,
    METRICS_HEADER,
};
