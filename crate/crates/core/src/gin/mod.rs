//! Graph isomorphism network over substructure-token node features, with a
//! small reverse-mode autodiff tape in double precision.

mod io;
mod model;
mod tape;
mod tensor;
mod train;

use thiserror::Error;

pub use io::{load_model, read_model, save_model, write_model, ModelMetadata, MODEL_FORMAT_VERSION};
pub use model::{Forward, GinConfig, GinModel, GraphBatch, LayerAgg, Param};
pub use tape::{Activation, Gradients, Pooling, Tape, TapeError, Var};
pub use tensor::Tensor;
pub use train::{bit_weights, pretrain, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum GinError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token {token} outside embedding table of {rows} rows")]
    TokenOutOfRange { token: u32, rows: usize },
    #[error("targets have {found} bits but the head has {expected} outputs")]
    TargetWidth { expected: usize, found: usize },
    #[error("no target bit is positive anywhere in the corpus")]
    DegenerateTarget,
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
