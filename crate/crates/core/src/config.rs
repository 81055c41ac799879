//! TOML run configuration with documented defaults for every key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_codec::CodecParams;
use crate::data::DatasetConfig;
use crate::model::{ModelConfig, Variant};
use crate::speaker_extractor::ExtractorConfig;
use crate::train::TrainConfig;
use crate::visual_frontend::VisualConfig;
use crate::{MuseError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seed: u64,
    pub codec: CodecParams,
    pub visual: VisualConfig,
    pub extractor: ExtractorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Parent of per-run output directories.
    pub runs_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { runs_dir: PathBuf::from("runs") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| MuseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse(&text).map_err(|e| MuseError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: MuseError| MuseError::Config(e.to_string());
        self.dataset.validate().map_err(wrap)?;
        self.model.codec.validate().map_err(wrap)?;
        self.model.extractor.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        if self.model.visual.envelope_dim != self.dataset.feature_dim {
            return Err(MuseError::Config(format!(
                "model.visual.envelope_dim ({}) must equal dataset.feature_dim ({})",
                self.model.visual.envelope_dim, self.dataset.feature_dim
            )));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration,
    /// so formatting and omitted defaults do not change it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_config(&self, variant: Variant, num_speakers: usize) -> ModelConfig {
        ModelConfig::new(
            self.model.codec.clone(),
            self.model.visual.clone(),
            &self.model.extractor,
            variant,
            num_speakers,
            self.model.seed,
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MuseError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.initial_lr, 1e-3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[model.extractor]\nrepeat = 2\n").is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = RunConfig::parse("[train]\nbatch_size = 2\n").unwrap();
        let b = RunConfig::parse("[train]\n  batch_size=2   # two\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.train.variant = Variant::MuseShared;
        c.model.extractor.repeats = 2;
        assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
