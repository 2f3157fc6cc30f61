pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod corruption;
pub mod finetune;
pub mod model;
pub mod pretrain;
mod error;
pub mod sequence;
pub mod vocab;

pub use error::{Error, Result};
pub use sequence::TokenSequence;

pub use autodiff::{Graph, ParamStore, Tensor};
pub use corpus::{preprocess, PreprocessOptions, ShardMeta};
pub use finetune::{FinetuneConfig, Task};
pub use model::{Checkpoint, ModelConfig, ModelParams};
pub use pretrain::{run_pretraining, Ablation, RunOptions, RunSummary, TrainConfig, Trainer};
pub use vocab::{tokenize, train_wordpiece, Vocab};
