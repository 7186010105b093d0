//! Generator-extractor model that predicts executable image commands from
//! a dialogue and the detections of previously produced images.
//!
//! The decoder mixes three token sources with a learned gate: a vocabulary
//! generator, a copy distribution over utterance tokens and a copy
//! distribution over detected concept tokens. Clamping the gate to the
//! generator gives the Base model.

pub mod ablation;
pub mod config;
pub mod experiment;
pub mod genext;
pub mod train;
pub mod vocab;

use thiserror::Error;

pub use ablation::{apply_ablation, AblationMode};
pub use config::{GateMode, ModelConfig};
pub use experiment::{results_table, run_variant, Dataset, SyntheticSpec, Variant, VariantResult};
pub use genext::{argmax, DecodeSession, DecodeStepOutput, Decoded, EncoderOutputs, GenExt, Prepared, TokenSource};
pub use train::{batch_gradients, evaluate, train, EpochLog, TrainReport};
pub use vocab::Vocab;

/// Finite-difference step used by [`GenExt::check_gradients`] callers.
pub use caise_nn::DEFAULT_STEP as GRADCHECK_STEP;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] caise_nn::NnError),
    #[error("nothing left to encode after masking")]
    EmptyContext,
    #[error("detection feature has length {got}, model expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
