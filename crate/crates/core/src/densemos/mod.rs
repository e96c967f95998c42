//! DenseMOS: a small MLP that predicts MOS from the 13 time-averaged hidden
//! layers of a self-supervised speech encoder.
//!
//! The layers are fused by a learned weighted average with weights
//! `|α_i| / Σ|α_j|`, then passed through two ReLU + dropout layers of width
//! 128 and a sigmoid output scaled to the 1..5 range. Gradients are written
//! out by hand; everything trains in f64 and is stored as f32.

mod adam;
mod checkpoint;
mod dataset;
mod embedding;
mod evaluate;
mod model;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, Checkpoint, CHECKPOINT_MAGIC};
pub use dataset::{load_samples, split_samples, Sample, SplitSamples};
pub use embedding::{read_embedding, write_embedding, LayerEmbeddings, EMB_MAGIC, EMB_VERSION};
pub use evaluate::{evaluate, predict, write_predictions, EvalOptions, Evaluation, Prediction};
pub use model::{
    forward, loss_and_grads, loss_and_grads_masked, weighted_layer_average, DropoutMasks,
    ForwardCache, Mode, ModelParams, ModelShape,
};
pub use train::{train, EpochRecord, TrainConfig};

use std::path::PathBuf;

use thiserror::Error;

pub const N_LAYERS: usize = 13;
pub const EMBED_DIM: usize = 768;
pub const HIDDEN: usize = 128;

#[derive(Debug, Error)]
pub enum DenseMosError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported version {version}")]
    Version { path: PathBuf, version: u16 },
    #[error("{what}: expected {expected}, found {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("{path}: truncated payload ({found} of {expected} bytes)")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: trailing bytes after payload")]
    TrailingBytes { path: PathBuf },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("all layer weights are zero")]
    ZeroAlphas,
    #[error("empty minibatch")]
    EmptyBatch,
    #[error("label {0} outside [1, 5]")]
    Label(f64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no embedding for stimulus {id:?} at {path}")]
    MissingEmbedding { id: String, path: PathBuf },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("checkpoint sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
}

pub type Result<T> = std::result::Result<T, DenseMosError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DenseMosError {
    let path = path.into();
    move |source| DenseMosError::Io { path, source }
}
