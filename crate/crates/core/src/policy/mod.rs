//! Behavior-cloning policy: windowed dataset, MLP, and its training loop.

mod bundle;
pub mod mlp;
pub mod optim;
pub mod sampler;
mod train;
pub mod windows;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundle::{PolicyBundle, POLICY_SCHEMA};
pub use mlp::{Gradients, Mlp, Mode};
pub use train::{split_indices, train, EpochRecord, TrainingHistory};
pub use windows::{build_windows, features, input_dim, NormStats, Windows};

/// How the validation set is carved out of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitLevel {
    /// Shuffle all windows together, then split.
    #[default]
    Window,
    /// Keep every window of a demonstration on the same side of the split.
    Demo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub history_len: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Set to false to train for exactly `max_epochs`.
    pub early_stopping: bool,
    pub early_stop_patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub val_fraction: f64,
    pub split: SplitLevel,
    pub distance_scale: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            history_len: 10,
            hidden_sizes: vec![256, 256],
            dropout: 0.0,
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            grad_clip_norm: 1.0,
            batch_size: 256,
            max_epochs: 100,
            early_stopping: true,
            early_stop_patience: 10,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_lr: 1e-6,
            val_fraction: 0.2,
            split: SplitLevel::Window,
            distance_scale: 1.0,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::validation(format!("policy.{field}"), msg));
        if self.history_len == 0 {
            return bad("history_len", "must be at least 1");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes", "need at least one non-empty hidden layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction", "must lie strictly between 0 and 1");
        }
        for (field, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip_norm", self.grad_clip_norm),
            ("min_lr", self.min_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, "must be positive");
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor", "must lie strictly between 0 and 1");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("plateau_patience", "patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size", "batch size and epoch budget must be positive");
        }
        if !self.distance_scale.is_finite() {
            return bad("distance_scale", "must be finite");
        }
        Ok(())
    }

    /// Layer widths from input to output for `joints` outputs.
    pub fn layer_sizes(&self, joints: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim(self.history_len)];
        sizes.extend(&self.hidden_sizes);
        sizes.push(joints);
        sizes
    }
}
