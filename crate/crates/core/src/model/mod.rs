//! Windowed multimodal transformer that predicts the next action feature.

pub mod adam;
pub mod checkpoint;
pub mod forward;
pub mod loss;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod train;
pub mod window;

use thiserror::Error;

use crate::trmf::TrmfError;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use forward::{
    accumulate_gradients, backward, forward, forward_with_cache, fuse_modalities, gate_values, positional_encode,
    sample_gradients, space_attention, time_attention, ForwardCache,
};
pub use loss::{mse_loss, mse_loss_batch};
pub use params::{AttentionKind, FusionKind, ModelConfig, ModelParams};
pub use tensor::{Mat, Scalar};
pub use train::{dataset_loss, sequence_pairs, train, TrainConfig, TrainReport, TrainingPair};
pub use window::{slide_window, FeatureWindow};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite activations after {0}")]
    NonFinite(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Trmf(#[from] TrmfError),
}
