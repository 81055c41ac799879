//! Audio-visual target speaker extraction with an iterative speaker path.

pub mod audio_codec;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod speaker_extractor;
pub mod train;
pub mod visual_frontend;

pub(crate) use error::invalid;
pub use error::{MuseError, Result};
pub use model::{ModelConfig, ModelInput, ModelOutput, MuseNet, Variant};
