use serde::{Deserialize, Serialize};

use crate::ablation::AblationMode;
use crate::ModelError;

/// Which token sources the selection gate may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// Learned three-way gate over generator, utterance copy and concept copy.
    #[default]
    Adaptive,
    /// Gate clamped to the generator; the Base model.
    GeneratorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden size `d`; must be even (bidirectional encoders use `d/2` per direction).
    pub hidden: usize,
    pub embed: usize,
    /// Length of each detection's visual feature vector.
    pub feature_dim: usize,
    pub max_decode_len: usize,
    pub dropout_embed: f64,
    pub dropout_out: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seeds: Vec<u64>,
    pub gate: GateMode,
    pub ablation: AblationMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 512,
            embed: 256,
            feature_dim: 2048,
            max_decode_len: 16,
            dropout_embed: 0.3,
            dropout_out: 0.5,
            lr: 1e-4,
            epochs: 500,
            batch_size: 32,
            clip_norm: 5.0,
            seeds: vec![2020, 2021, 2022],
            gate: GateMode::Adaptive,
            ablation: AblationMode::Full,
        }
    }
}

impl ModelConfig {
    /// Settings that train on one CPU core in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            hidden: 64,
            embed: 32,
            feature_dim: 16,
            lr: 3e-3,
            epochs: 30,
            batch_size: 16,
            ..ModelConfig::default()
        }
    }

    /// Tiny model for gradient checks and unit tests.
    pub fn micro() -> Self {
        ModelConfig {
            hidden: 8,
            embed: 8,
            feature_dim: 4,
            max_decode_len: 10,
            dropout_embed: 0.0,
            dropout_out: 0.0,
            lr: 1e-2,
            epochs: 30,
            batch_size: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return bad("hidden size must be even and positive");
        }
        if self.embed == 0 {
            return bad("embedding dimension must be positive");
        }
        if self.max_decode_len == 0 {
            return bad("max decode length must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_embed) || !(0.0..1.0).contains(&self.dropout_out) {
            return bad("dropout rates must be in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}
