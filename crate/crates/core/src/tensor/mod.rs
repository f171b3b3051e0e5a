//! Dense linear algebra, the feed-forward model with per-example
//! backpropagation, and dataset loading.

mod data;
mod matrix;
mod model;
mod vector;

pub use data::{load_idx, parse_idx, synth_blobs};
pub use matrix::Matrix;
pub use model::{Batch, MlpModel, PerExampleGrads, CHECKPOINT_FORMAT_VERSION};
pub use vector::ParameterVector;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("IDX format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
