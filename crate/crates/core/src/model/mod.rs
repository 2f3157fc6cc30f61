//! Generator and discriminator Transformer encoders with tied embeddings
//! and the MLM, replaced-token, candidate-selection, and `[CLS]` heads.

mod checkpoint;
mod config;
mod encode;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{derive_generator_config, ModelConfig, StackConfig};
pub use encode::{similarity, Encoded, Encoding, Mode, Stack};
pub use params::{GeneratorIds, LayerIds, Layout, ModelParams, StackIds};
