//! The full network: audio encoder, visual encoder, speaker extractor,
//! decoder and (training-only) speaker classification heads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use muse_autograd::{Graph, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::audio_codec::{padded_len, AudioCodec, CodecParams};
use crate::nn::ParamBuilder;
use crate::objectives::ClassifierHeads;
use crate::speaker_extractor::{Extraction, ExtractorConfig, SpeakerExtractor};
use crate::visual_frontend::{VisualConfig, VisualEncoder, VisualInput};
use crate::{invalid, MuseError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Variant {
    #[serde(rename = "muse")]
    Muse,
    /// Trained without the speaker classification term.
    #[serde(rename = "muse-jt")]
    MuseJt,
    /// One speaker encoder shared by all blocks.
    #[serde(rename = "muse-shared")]
    MuseShared,
    /// Speaker path and classification heads removed.
    #[serde(rename = "av-convtasnet")]
    AvConvTasnet,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Muse, Variant::MuseJt, Variant::MuseShared, Variant::AvConvTasnet];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Muse => "muse",
            Variant::MuseJt => "muse-jt",
            Variant::MuseShared => "muse-shared",
            Variant::AvConvTasnet => "av-convtasnet",
        }
    }

    /// Extractor settings implied by the variant.
    pub fn configure(self, base: &ExtractorConfig) -> ExtractorConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Muse | Variant::MuseJt => {
                cfg.share_speaker_encoders = false;
                cfg.speaker_path = true;
            }
            Variant::MuseShared => {
                cfg.share_speaker_encoders = true;
                cfg.speaker_path = true;
            }
            Variant::AvConvTasnet => {
                cfg.share_speaker_encoders = false;
                cfg.speaker_path = false;
            }
        }
        cfg
    }

    /// Classification weight actually used for this variant.
    pub fn effective_gamma(self, gamma: f64) -> f64 {
        match self {
            Variant::MuseJt | Variant::AvConvTasnet => 0.0,
            _ => gamma,
        }
    }

    pub fn has_heads(self) -> bool {
        self != Variant::AvConvTasnet
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = MuseError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| MuseError::Invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub codec: CodecParams,
    pub visual: VisualConfig,
    /// Extractor settings after applying the variant.
    pub extractor: ExtractorConfig,
    pub variant: Variant,
    /// Number of training speakers `C` (0 disables the heads).
    pub num_speakers: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(
        codec: CodecParams,
        visual: VisualConfig,
        extractor: &ExtractorConfig,
        variant: Variant,
        num_speakers: usize,
        seed: u64,
    ) -> Self {
        ModelConfig { codec, visual, extractor: variant.configure(extractor), variant, num_speakers, seed }
    }
}

/// One batch of network input.
#[derive(Clone, Debug)]
pub struct ModelInput {
    /// `[B, T]` mixture waveforms.
    pub mixture: Tensor,
    pub visual: VisualInput,
    /// Optional `[B, F]` visibility mask (0 = occluded frame).
    pub keep: Option<Tensor>,
}

pub struct ModelOutput {
    /// `[B, T]` extracted waveforms.
    pub estimate: Var,
    pub extraction: Extraction,
    /// `[B, N, K]` speech embedding of the mixture.
    pub embedding: Var,
}

#[derive(Clone, Debug)]
pub struct MuseNet {
    pub config: ModelConfig,
    store: ParamStore,
    pub codec: AudioCodec,
    pub visual: VisualEncoder,
    pub extractor: SpeakerExtractor,
    heads: Option<ClassifierHeads>,
}

impl MuseNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let (codec, visual, extractor, heads) = {
            let mut pb = ParamBuilder::new(&mut store, config.seed);
            let codec = AudioCodec::new(&mut pb, config.codec.clone())?;
            let visual = VisualEncoder::new(&mut pb, config.visual.clone())?;
            let extractor = SpeakerExtractor::new(
                &mut pb,
                config.extractor.clone(),
                config.codec.channels,
                config.visual.embed_dim,
            )?;
            let heads = if config.variant.has_heads() && config.extractor.speaker_path && config.num_speakers > 0 {
                Some(ClassifierHeads::new(
                    &mut pb,
                    config.extractor.repeats,
                    config.num_speakers,
                    config.extractor.speaker_dim,
                )?)
            } else {
                None
            };
            (codec, visual, extractor, heads)
        };
        if config.visual.frozen {
            store.freeze_prefix(VisualEncoder::FRONTEND_PREFIX, true);
        }
        Ok(MuseNet { config, store, codec, visual, extractor, heads })
    }

    /// Rebuilds the module structure for `config` and installs the given
    /// parameters, which must match by name and shape. A store without
    /// classification heads yields a network without heads.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let has_heads = params.ids().any(|id| params.name(id).starts_with(ClassifierHeads::PREFIX));
        let mut net = if has_heads {
            MuseNet::new(config)?
        } else {
            let mut net = MuseNet::new(ModelConfig { num_speakers: 0, ..config.clone() })?;
            net.config = config;
            net
        };
        if net.store.len() != params.len() {
            return Err(MuseError::Checkpoint(format!(
                "expected {} parameters, found {}",
                net.store.len(),
                params.len()
            )));
        }
        for id in net.store.ids().collect::<Vec<_>>() {
            let name = net.store.name(id).to_string();
            let src =
                params.lookup(&name).ok_or_else(|| MuseError::Checkpoint(format!("missing parameter `{name}`")))?;
            net.store.set(id, params.get(src).clone()).map_err(|e| MuseError::Checkpoint(e.to_string()))?;
            net.store.set_frozen(id, params.is_frozen(src));
        }
        Ok(net)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn heads(&self) -> Option<&ClassifierHeads> {
        self.heads.as_ref()
    }

    /// Copy of the network with the classification heads removed.
    pub fn without_heads(&self) -> Result<MuseNet> {
        MuseNet::from_parts(self.config.clone(), self.store.without_prefix(ClassifierHeads::PREFIX))
    }

    /// Total number of weights (buffers excluded).
    pub fn param_count(&self) -> usize {
        self.store.weight_count("")
    }

    pub fn trainable_count(&self) -> usize {
        self.store.trainable_ids().iter().map(|&id| self.store.get(id).len()).sum()
    }

    /// Weight counts grouped by module (`codec`, `visual.frontend`,
    /// `extractor.speaker0`, ...).
    pub fn param_counts_by_module(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for id in self.store.ids() {
            if self.store.kind(id) != muse_autograd::ParamKind::Weight {
                continue;
            }
            let name = self.store.name(id);
            let parts: Vec<&str> = name.split('.').collect();
            let key = match parts[0] {
                "visual" | "extractor" if parts.len() > 2 => format!("{}.{}", parts[0], parts[1]),
                other => other.to_string(),
            };
            *out.entry(key).or_insert(0) += self.store.get(id).len();
        }
        out
    }

    /// Forward pass. Mixtures whose length does not tile with the codec are
    /// zero-padded internally and the estimate is trimmed back to `T`.
    pub fn forward(&self, g: &mut Graph, input: &ModelInput) -> Result<ModelOutput> {
        let (b, t) = input.mixture.dims2()?;
        if input.visual.batch() != b {
            return invalid(format!("{} visual streams for {b} mixtures", input.visual.batch()));
        }
        let l = self.config.codec.kernel;
        let t_pad = padded_len(t, l);
        let wave = if t_pad == t {
            g.input(input.mixture.clone())
        } else {
            let mut padded = Tensor::zeros(&[b, t_pad]);
            for bi in 0..b {
                padded.item_slice_mut(bi)[..t].copy_from_slice(input.mixture.item_slice(bi));
            }
            g.input(padded)
        };
        let x = self.codec.encode(g, &self.store, wave)?;
        let (_, _, k) = g.value(x).dims3()?;
        let v = self.visual.forward(g, &self.store, &input.visual, input.keep.as_ref(), k)?;
        let extraction = self.extractor.extract(g, &self.store, x, v)?;
        let estimate = self.codec.decode(g, &self.store, extraction.estimate, t)?;
        Ok(ModelOutput { estimate, extraction, embedding: x })
    }

    /// Inference on a batch; never touches the classification heads.
    pub fn separate(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::inference();
        let out = self.forward(&mut g, input)?;
        Ok(g.value(out.estimate).clone())
    }

    /// Applies queued running-statistics updates from a training pass.
    pub fn apply_buffer_updates(&mut self, g: &mut Graph) -> Result<()> {
        for (id, value) in g.take_buffer_updates() {
            self.store.set(id, value)?;
        }
        Ok(())
    }
}
