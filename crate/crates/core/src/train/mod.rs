//! Training schedule, evaluation and the ablation matrix.

pub mod ablate;
pub mod adam;
pub mod evaluate;
pub mod schedule;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::model::Variant;
use crate::objectives::DEFAULT_GAMMA;
use crate::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_halving_patience: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub gamma: f64,
    pub seed: u64,
    /// Training crop length in seconds (rounded to whole video frames).
    pub crop_s: f64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_halving_patience: 3,
            early_stop_patience: 5,
            batch_size: 4,
            max_epochs: 100,
            max_steps: None,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            crop_s: 4.0,
            variant: Variant::Muse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_halving_patience == 0 || self.early_stop_patience == 0 {
            return invalid("patience values must be positive");
        }
        if !(self.initial_lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return invalid("learning rate, batch size and max epochs must be positive");
        }
        if !(self.gamma >= 0.0) || !(self.crop_s > 0.0) {
            return invalid("gamma must be non-negative and the crop positive");
        }
        Ok(())
    }

    pub fn crop_frames(&self) -> usize {
        crate::data::synth::frames_for(self.crop_s).max(1)
    }
}
