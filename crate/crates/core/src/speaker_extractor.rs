//! Iterative speaker extractor.
//!
//! Block `r` masks the speech embedding with the previous mask, encodes the
//! masked speech together with the visual stream into a self-enrolled
//! speaker vector `A^r`, then estimates a refined mask from the previous
//! mask, the visual stream and `A^r`. The first "mask" is the embedding
//! itself (`M^0 = X`).

use muse_autograd::{Graph, ParamId, ParamStore, Var};
use serde::{Deserialize, Serialize};

use crate::audio_codec::apply_mask;
use crate::nn::{ids_with_prefix, BatchNorm1d, Conv1x1, DepthwiseConv, GlobalLayerNorm, PRelu, ParamBuilder};
use crate::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Number of extractor blocks `R`.
    pub repeats: usize,
    /// A-TCN blocks per mask estimator `D`.
    pub tcn_blocks: usize,
    pub share_speaker_encoders: bool,
    /// Width of the fused representation inside the mask estimator.
    pub hidden: usize,
    /// Dimension of the speaker embedding `A^r`.
    pub speaker_dim: usize,
    /// When false the speaker encoders and `A^r` fusion are removed,
    /// leaving a purely visually-conditioned mask estimator.
    pub speaker_path: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            repeats: 4,
            tcn_blocks: 8,
            share_speaker_encoders: false,
            hidden: 512,
            speaker_dim: 256,
            speaker_path: true,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.tcn_blocks == 0 {
            return invalid("extractor needs R >= 1 and D >= 1");
        }
        if self.hidden == 0 || self.speaker_dim == 0 {
            return invalid("extractor widths must be positive");
        }
        Ok(())
    }
}

/// Frames seen by a stack of `d` dilated convolutions with dilation
/// `2^(i-1)`: `1 + (kernel - 1)(2^d - 1)`.
pub fn receptive_field(d: usize, kernel: usize) -> usize {
    1 + (kernel - 1) * ((1usize << d) - 1)
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv1x1,
    bn1: BatchNorm1d,
    act1: PRelu,
    conv2: Conv1x1,
    bn2: BatchNorm1d,
    act_out: PRelu,
}

impl ResBlock {
    fn new(pb: &mut ParamBuilder, name: &str, c: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(ResBlock {
                conv1: Conv1x1::new(pb, "conv1", c, c, true)?,
                bn1: BatchNorm1d::new(pb, "bn1", c)?,
                act1: PRelu::new(pb, "act1")?,
                conv2: Conv1x1::new(pb, "conv2", c, c, true)?,
                bn2: BatchNorm1d::new(pb, "bn2", c)?,
                act_out: PRelu::new(pb, "act_out")?,
            })
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, store, x)?;
        let y = self.bn1.forward(g, store, y)?;
        let y = self.act1.forward(g, store, y)?;
        let y = self.conv2.forward(g, store, y)?;
        let y = self.bn2.forward(g, store, y)?;
        let y = g.add(x, y)?;
        self.act_out.forward(g, store, y)
    }
}

/// Visual + masked-speech sequence to one fixed-size speaker vector.
#[derive(Clone, Debug)]
pub struct SpeakerEncoder {
    prefix: String,
    in_proj: Conv1x1,
    blocks: Vec<ResBlock>,
    visual_dim: usize,
    speech_dim: usize,
}

impl SpeakerEncoder {
    pub const RES_BLOCKS: usize = 3;
    pub const POOL_KERNEL: usize = 3;

    fn new(pb: &mut ParamBuilder, name: &str, visual_dim: usize, speech_dim: usize, out: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(SpeakerEncoder {
                prefix: pb.prefix(),
                in_proj: Conv1x1::new(pb, "in_proj", visual_dim + speech_dim, out, true)?,
                blocks: (0..Self::RES_BLOCKS)
                    .map(|i| ResBlock::new(pb, &format!("res{i}"), out))
                    .collect::<Result<_>>()?,
                visual_dim,
                speech_dim,
            })
        })
    }

    /// `V [B, Dv, K]`, `S_prev [B, N, K]` to `A [B, speaker_dim]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, v: Var, s_prev: Var) -> Result<Var> {
        let (vb, vc, vk) = g.value(v).dims3()?;
        let (sb, sc, sk) = g.value(s_prev).dims3()?;
        if vb != sb || vk != sk {
            return invalid(format!("speaker encoder: visual [{vb}, _, {vk}] vs speech [{sb}, _, {sk}]"));
        }
        if vc != self.visual_dim || sc != self.speech_dim {
            return invalid(format!(
                "speaker encoder expects {}+{} channels, got {vc}+{sc}",
                self.visual_dim, self.speech_dim
            ));
        }
        let x = g.concat_channels(&[v, s_prev])?;
        let mut y = self.in_proj.forward(g, store, x)?;
        for b in &self.blocks {
            y = b.forward(g, store, y)?;
        }
        let y = g.avg_pool_time(y, Self::POOL_KERNEL)?;
        Ok(g.mean_time(y)?)
    }

    /// Name prefix of this encoder's parameters.
    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        ids_with_prefix(store, &self.prefix)
    }
}

#[derive(Clone, Debug)]
struct ATcnBlock {
    conv_in: Conv1x1,
    norm1: GlobalLayerNorm,
    act1: PRelu,
    depthwise: DepthwiseConv,
    norm2: GlobalLayerNorm,
    act2: PRelu,
    conv_out: Conv1x1,
}

impl ATcnBlock {
    fn new(pb: &mut ParamBuilder, name: &str, c: usize, dilation: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(ATcnBlock {
                conv_in: Conv1x1::new(pb, "conv_in", c, c, true)?,
                norm1: GlobalLayerNorm::new(pb, "norm1", c)?,
                act1: PRelu::new(pb, "act1")?,
                depthwise: DepthwiseConv::new(pb, "dw", c, 3, dilation)?,
                norm2: GlobalLayerNorm::new(pb, "norm2", c)?,
                act2: PRelu::new(pb, "act2")?,
                conv_out: Conv1x1::new(pb, "conv_out", c, c, true)?,
            })
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.conv_in.forward(g, store, x)?;
        let y = self.norm1.forward(g, store, y)?;
        let y = self.act1.forward(g, store, y)?;
        let y = self.depthwise.forward(g, store, y)?;
        let y = self.norm2.forward(g, store, y)?;
        let y = self.act2.forward(g, store, y)?;
        let y = self.conv_out.forward(g, store, y)?;
        Ok(g.add(x, y)?)
    }
}

/// Fuses the previous mask, the visual stream and (optionally) the speaker
/// vector, runs a dilated A-TCN stack and emits a non-negative mask.
#[derive(Clone, Debug)]
pub struct MaskEstimator {
    prefix: String,
    in_proj: Conv1x1,
    blocks: Vec<ATcnBlock>,
    out_proj: Conv1x1,
    speech_dim: usize,
    visual_dim: usize,
    speaker_dim: Option<usize>,
}

impl MaskEstimator {
    fn new(
        pb: &mut ParamBuilder,
        name: &str,
        speech_dim: usize,
        visual_dim: usize,
        speaker_dim: Option<usize>,
        cfg: &ExtractorConfig,
    ) -> Result<Self> {
        pb.scoped(name, |pb| {
            let fused = speech_dim + visual_dim + speaker_dim.unwrap_or(0);
            Ok(MaskEstimator {
                prefix: pb.prefix(),
                in_proj: Conv1x1::new(pb, "in_proj", fused, cfg.hidden, true)?,
                blocks: (0..cfg.tcn_blocks)
                    .map(|d| ATcnBlock::new(pb, &format!("tcn{d}"), cfg.hidden, 1 << d))
                    .collect::<Result<_>>()?,
                out_proj: Conv1x1::new(pb, "out_proj", cfg.hidden, speech_dim, true)?,
                speech_dim,
                visual_dim,
                speaker_dim,
            })
        })
    }

    /// Width of the fused `[M; V; A]` input.
    pub fn input_channels(&self) -> usize {
        self.speech_dim + self.visual_dim + self.speaker_dim.unwrap_or(0)
    }

    /// Dilation factors of the depth-wise convolutions, in order.
    pub fn dilations(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.depthwise.dilation).collect()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, m_prev: Var, v: Var, a: Option<Var>) -> Result<Var> {
        let (mb, mc, mk) = g.value(m_prev).dims3()?;
        let (vb, vc, vk) = g.value(v).dims3()?;
        if mb != vb || mk != vk || mc != self.speech_dim || vc != self.visual_dim {
            return invalid(format!(
                "mask estimator: mask [{mb}, {mc}, {mk}] / visual [{vb}, {vc}, {vk}] do not fit [B, {}, K] / [B, {}, K]",
                self.speech_dim, self.visual_dim
            ));
        }
        let mut parts = vec![m_prev, v];
        match (self.speaker_dim, a) {
            (Some(dim), Some(a)) => {
                let (ab, ad) = g.value(a).dims2()?;
                if ab != mb || ad != dim {
                    return invalid(format!("speaker embedding [{ab}, {ad}] vs [{mb}, {dim}]"));
                }
                parts.push(g.repeat_time(a, mk)?);
            }
            (None, None) => {}
            (Some(_), None) => return invalid("mask estimator needs a speaker embedding"),
            (None, Some(_)) => return invalid("mask estimator has no speaker input"),
        }
        let x = g.concat_channels(&parts)?;
        let mut y = self.in_proj.forward(g, store, x)?;
        for b in &self.blocks {
            y = b.forward(g, store, y)?;
        }
        let y = self.out_proj.forward(g, store, y)?;
        Ok(g.relu(y))
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        ids_with_prefix(store, &self.prefix)
    }
}

/// Output of [`SpeakerExtractor::extract`].
#[derive(Clone, Debug)]
pub struct Extraction {
    /// `X ⊗ M^R`.
    pub estimate: Var,
    pub masks: Vec<Var>,
    /// One `[B, speaker_dim]` vector per block; empty without a speaker path.
    pub speaker_embeddings: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct SpeakerExtractor {
    pub config: ExtractorConfig,
    speaker_encoders: Vec<SpeakerEncoder>,
    mask_estimators: Vec<MaskEstimator>,
}

impl SpeakerExtractor {
    pub fn new(pb: &mut ParamBuilder, config: ExtractorConfig, speech_dim: usize, visual_dim: usize) -> Result<Self> {
        config.validate()?;
        pb.scoped("extractor", |pb| {
            let n_enc = match (config.speaker_path, config.share_speaker_encoders) {
                (false, _) => 0,
                (true, true) => 1,
                (true, false) => config.repeats,
            };
            let speaker_encoders = (0..n_enc)
                .map(|r| SpeakerEncoder::new(pb, &format!("speaker{r}"), visual_dim, speech_dim, config.speaker_dim))
                .collect::<Result<_>>()?;
            let speaker_dim = config.speaker_path.then_some(config.speaker_dim);
            let mask_estimators = (0..config.repeats)
                .map(|r| MaskEstimator::new(pb, &format!("mask{r}"), speech_dim, visual_dim, speaker_dim, &config))
                .collect::<Result<_>>()?;
            Ok(SpeakerExtractor { config, speaker_encoders, mask_estimators })
        })
    }

    /// Speaker encoder used by block `r` (0-based).
    pub fn speaker_encoder(&self, r: usize) -> Option<&SpeakerEncoder> {
        if self.config.share_speaker_encoders {
            self.speaker_encoders.first()
        } else {
            self.speaker_encoders.get(r)
        }
    }

    pub fn speaker_encoders(&self) -> &[SpeakerEncoder] {
        &self.speaker_encoders
    }

    pub fn mask_estimator(&self, r: usize) -> &MaskEstimator {
        &self.mask_estimators[r]
    }

    /// One extractor block (0-based `r`): returns `(M^r, A^r)`.
    pub fn extractor_block(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        v: Var,
        m_prev: Var,
        r: usize,
    ) -> Result<(Var, Option<Var>)> {
        if r >= self.config.repeats {
            return invalid(format!("block {r} out of range for R = {}", self.config.repeats));
        }
        let a = match self.speaker_encoder(r) {
            Some(enc) => {
                let s_prev = apply_mask(g, x, m_prev)?;
                Some(enc.forward(g, store, v, s_prev)?)
            }
            None => None,
        };
        let m = self.mask_estimators[r].forward(g, store, m_prev, v, a)?;
        Ok((m, a))
    }

    /// Runs all `R` blocks starting from `M^0 = X`.
    pub fn extract(&self, g: &mut Graph, store: &ParamStore, x: Var, v: Var) -> Result<Extraction> {
        let (xb, _, xk) = g.value(x).dims3()?;
        let (vb, _, vk) = g.value(v).dims3()?;
        if xb != vb || xk != vk {
            return invalid(format!("speech [{xb}, _, {xk}] and visual [{vb}, _, {vk}] embeddings are not aligned"));
        }
        let mut m = x;
        let mut masks = Vec::with_capacity(self.config.repeats);
        let mut speaker_embeddings = Vec::new();
        for r in 0..self.config.repeats {
            let (next, a) = self.extractor_block(g, store, x, v, m, r)?;
            masks.push(next);
            speaker_embeddings.extend(a);
            m = next;
        }
        let estimate = apply_mask(g, x, m)?;
        Ok(Extraction { estimate, masks, speaker_embeddings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_of_default_stack() {
        assert_eq!(receptive_field(8, 3), 511);
        assert_eq!(receptive_field(1, 3), 3);
    }
}
