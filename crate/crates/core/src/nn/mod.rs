//! Bidirectional LSTM tag classifier.
//!
//! Tag indices are embedded, passed through stacked bidirectional LSTM
//! layers, and the forward direction's state after the last position is
//! concatenated with the backward direction's state after the first
//! position. That summary feeds a ReLU layer and a softmax over output tags.
//!
//! All parameters live in one flat `f64` buffer described by a [`Layout`],
//! which keeps the optimizer, gradient checking and persistence trivial.

mod adam;
mod gradcheck;
mod io;
mod network;
mod params;

pub use adam::{AdamSettings, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use io::{load_model, save_model, LoadedModel, FORMAT_VERSION, MAGIC};
pub use network::{DropoutMasks, ForwardPass, Mode};
pub use params::{Gradients, Layout, LstmOffsets, ModelParams, TensorInfo};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("input index {index} outside vocabulary of size {size}")]
    IndexOutOfVocab { index: usize, size: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("forward pass was computed with different parameters")]
    StaleCache,
    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    VersionMismatch(u16),
    #[error("model file checksum failure")]
    ChecksumFailure,
    #[error("{0} vocabulary does not match the one the model was trained with")]
    VocabMismatch(&'static str),
    #[error("non-finite parameter value")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and regularization hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_vocab_size: usize,
    pub output_vocab_size: usize,
    pub embedding_dim: usize,
    pub recurrent_layers: usize,
    pub hidden_per_direction: usize,
    pub dropout_recurrent: f64,
    pub fc_units: usize,
    pub dropout_fc: f64,
    /// L2 coefficient on the FC and softmax weight matrices.
    pub weight_decay: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Default architecture for the given vocabulary sizes.
    pub fn new(input_vocab_size: usize, output_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            input_vocab_size,
            output_vocab_size,
            embedding_dim: 32,
            recurrent_layers: 2,
            hidden_per_direction: 64,
            dropout_recurrent: 0.2,
            fc_units: 128,
            dropout_fc: 0.5,
            weight_decay: 0.0005,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("input_vocab_size", self.input_vocab_size),
            ("output_vocab_size", self.output_vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("recurrent_layers", self.recurrent_layers),
            ("hidden_per_direction", self.hidden_per_direction),
            ("fc_units", self.fc_units),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        for (name, p) in [
            ("dropout_recurrent", self.dropout_recurrent),
            ("dropout_fc", self.dropout_fc),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must lie in [0, 1)"
                )));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "weight_decay must be >= 0".into(),
            ));
        }
        Ok(())
    }
}
