//! Lip-stream encoder: a pluggable per-frame frontend, a residual temporal
//! convolution stack (V-TCN) and upsampling to the audio frame rate.

use muse_autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::nn::{BatchNorm1d, Conv1x1, DepthwiseConv, ParamBuilder};
use crate::{invalid, Result};

pub const VIDEO_FPS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    /// Fixed projection of low-dimensional envelope features.
    Envelope,
    /// Small randomly initialised Conv3D + CNN over grayscale lip crops.
    Standin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    Repeat,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualConfig {
    pub frontend: FrontendKind,
    pub frozen: bool,
    pub embed_dim: usize,
    pub vtcn_blocks: usize,
    /// Feature width `E` of the envelope frontend input.
    pub envelope_dim: usize,
    /// Side of the square lip crops for the stand-in frontend.
    pub image_size: usize,
    pub standin_channels: usize,
    pub upsample: UpsampleMode,
}

impl Default for VisualConfig {
    fn default() -> Self {
        VisualConfig {
            frontend: FrontendKind::Envelope,
            frozen: true,
            embed_dim: 512,
            vtcn_blocks: 5,
            envelope_dim: 8,
            image_size: 112,
            standin_channels: 16,
            upsample: UpsampleMode::Repeat,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrontendHandle {
    pub kind: FrontendKind,
    pub frozen: bool,
}

/// `F` grayscale frames of `H x W` intensities in `[0, 1]` at 25 fps.
#[derive(Clone, Debug, PartialEq)]
pub struct LipImageSequence {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl LipImageSequence {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * height * width {
            return invalid(format!("{} values for {frames}x{height}x{width} frames", data.len()));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("lip intensities must lie in [0, 1]");
        }
        Ok(LipImageSequence { frames, height, width, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `[1, 1, F, H, W]` input for the stand-in frontend.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, 1, self.frames, self.height, self.width], self.data.clone()).expect("sized")
    }

    /// Copy with frames `start..start+len` set to zero.
    pub fn occluded(&self, start: usize, len: usize) -> Result<Self> {
        check_span(start, len, self.frames)?;
        let area = self.height * self.width;
        let mut out = self.clone();
        out.data[start * area..(start + len) * area].fill(0.0);
        Ok(out)
    }
}

/// Visual input for one batch.
#[derive(Clone, Debug)]
pub enum VisualInput {
    /// `[B, E, F]` envelope features.
    Envelope(Tensor),
    /// `[B, 1, F, H, W]` lip crops.
    Images(Tensor),
}

impl VisualInput {
    pub fn frames(&self) -> usize {
        match self {
            VisualInput::Envelope(t) => t.shape()[2],
            VisualInput::Images(t) => t.shape()[2],
        }
    }

    pub fn batch(&self) -> usize {
        match self {
            VisualInput::Envelope(t) | VisualInput::Images(t) => t.shape()[0],
        }
    }
}

fn check_span(start: usize, len: usize, frames: usize) -> Result<()> {
    if start.checked_add(len).is_none_or(|end| end > frames) {
        return invalid(format!("occlusion {start}+{len} exceeds {frames} frames"));
    }
    Ok(())
}

/// Copy of a `[..., F]` time-last tensor with columns `start..start+len` zeroed.
pub fn occlude(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let f = *t.shape().last().ok_or_else(|| crate::MuseError::Invalid("occlude: scalar".into()))?;
    check_span(start, len, f)?;
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(f) {
        row[start..start + len].fill(0.0);
    }
    Ok(out)
}

/// Number of frames covered by occluding `fraction` of `frames`, rounded up.
pub fn occlusion_len(frames: usize, fraction: f64) -> usize {
    // Guard against 0.3 * 100 = 30.000000000000004.
    ((fraction * frames as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Per-frame keep mask (1 = visible, 0 = occluded).
pub fn keep_mask(frames: usize, spans: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut keep = vec![1.0; frames];
    for &(s, l) in spans {
        check_span(s, l, frames)?;
        keep[s..s + l].fill(0.0);
    }
    Ok(keep)
}

#[derive(Clone, Debug)]
enum Frontend {
    Envelope { proj: Conv1x1 },
    Standin { conv1: (ParamId, ParamId), conv2: (ParamId, ParamId), proj: Conv1x1 },
}

#[derive(Clone, Debug)]
struct VtcnBlock {
    bn: BatchNorm1d,
    depthwise: DepthwiseConv,
    pointwise: Conv1x1,
}

/// Residual stack of `ReLU -> BN -> depth-wise separable Conv1D` blocks.
#[derive(Clone, Debug)]
pub struct Vtcn {
    channels: usize,
    blocks: Vec<VtcnBlock>,
}

impl Vtcn {
    pub fn new(pb: &mut ParamBuilder, channels: usize, blocks: usize) -> Result<Self> {
        pb.scoped("vtcn", |pb| {
            let blocks = (0..blocks)
                .map(|i| {
                    pb.scoped(&format!("block{i}"), |pb| {
                        Ok(VtcnBlock {
                            bn: BatchNorm1d::new(pb, "bn", channels)?,
                            depthwise: DepthwiseConv::new(pb, "dw", channels, 3, 1)?,
                            pointwise: Conv1x1::new(pb, "pw", channels, channels, true)?,
                        })
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Vtcn { channels, blocks })
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, c, _) = g.value(x).dims3()?;
        if c != self.channels {
            return invalid(format!("V-TCN expects {} channels, got {c}", self.channels));
        }
        let mut x = x;
        for b in &self.blocks {
            let y = g.relu(x);
            let y = b.bn.forward(g, store, y)?;
            let y = b.depthwise.forward(g, store, y)?;
            let y = b.pointwise.forward(g, store, y)?;
            x = g.add(x, y)?;
        }
        Ok(x)
    }

    /// Zeroes every convolution weight and bias so each block outputs zero.
    pub fn zero_blocks(&self, store: &mut ParamStore) {
        for b in &self.blocks {
            let ids = [Some(b.depthwise.weight), Some(b.depthwise.bias), Some(b.pointwise.weight), b.pointwise.bias];
            for id in ids.into_iter().flatten() {
                let shape = store.get(id).shape().to_vec();
                store.set(id, Tensor::zeros(&shape)).expect("same shape");
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VisualEncoder {
    pub config: VisualConfig,
    pub handle: FrontendHandle,
    frontend: Frontend,
    pub vtcn: Vtcn,
}

impl VisualEncoder {
    pub const FRONTEND_PREFIX: &'static str = "visual.frontend.";

    pub fn new(pb: &mut ParamBuilder, config: VisualConfig) -> Result<Self> {
        let d = config.embed_dim;
        pb.scoped("visual", |pb| {
            let frontend = pb.scoped("frontend", |pb| match config.frontend {
                FrontendKind::Envelope => {
                    Ok(Frontend::Envelope { proj: Conv1x1::new(pb, "proj", config.envelope_dim, d, false)? })
                }
                FrontendKind::Standin => {
                    let c = config.standin_channels;
                    let conv1 =
                        (pb.uniform("conv1.w", &[c, 1, 5, 7, 7], 5 * 49)?, pb.uniform("conv1.b", &[c], 5 * 49)?);
                    let conv2 = (pb.uniform("conv2.w", &[c, c, 1, 3, 3], c * 9)?, pb.uniform("conv2.b", &[c], c * 9)?);
                    Ok(Frontend::Standin { conv1, conv2, proj: Conv1x1::new(pb, "proj", c, d, true)? })
                }
            })?;
            let vtcn = Vtcn::new(pb, d, config.vtcn_blocks)?;
            Ok(VisualEncoder {
                handle: FrontendHandle { kind: config.frontend, frozen: config.frozen },
                config,
                frontend,
                vtcn,
            })
        })
    }

    /// Per-video-frame embeddings `[B, D, F]`.
    pub fn lip_frontend(&self, g: &mut Graph, store: &ParamStore, input: &VisualInput) -> Result<Var> {
        if input.frames() == 0 {
            return invalid("empty visual sequence");
        }
        match (&self.frontend, input) {
            (Frontend::Envelope { proj }, VisualInput::Envelope(t)) => {
                if t.shape()[1] != self.config.envelope_dim {
                    return invalid(format!(
                        "envelope features have {} dims, expected {}",
                        t.shape()[1],
                        self.config.envelope_dim
                    ));
                }
                let x = g.input(t.clone());
                proj.forward(g, store, x)
            }
            (Frontend::Standin { conv1, conv2, proj }, VisualInput::Images(t)) => {
                let x = g.input(t.clone());
                let (w1, b1) = (g.param(store, conv1.0), g.param(store, conv1.1));
                let y = g.conv3d(x, w1, Some(b1), [1, 2, 2], [2, 3, 3])?;
                let y = g.relu(y);
                let (w2, b2) = (g.param(store, conv2.0), g.param(store, conv2.1));
                let y = g.conv3d(y, w2, Some(b2), [1, 2, 2], [0, 1, 1])?;
                let y = g.relu(y);
                let y = g.spatial_mean(y)?;
                proj.forward(g, store, y)
            }
            _ => invalid(format!("visual input does not match the {:?} frontend", self.handle.kind)),
        }
    }

    /// Full visual path to `[B, D, K]`. `keep` is an optional `[B, F]` mask
    /// whose zero entries blank the frontend output (occlusion).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: &VisualInput,
        keep: Option<&Tensor>,
        k: usize,
    ) -> Result<Var> {
        let mut v = self.lip_frontend(g, store, input)?;
        if let Some(keep) = keep {
            let (b, d, f) = g.value(v).dims3()?;
            if keep.shape() != [b, f] {
                return invalid(format!("keep mask {:?} vs [{b}, {f}]", keep.shape()));
            }
            let mut m = Tensor::zeros(&[b, d, f]);
            for bi in 0..b {
                for ci in 0..d {
                    m.item_slice_mut(bi)[ci * f..(ci + 1) * f].copy_from_slice(keep.item_slice(bi));
                }
            }
            let m = g.input(m);
            v = g.mul(v, m)?;
        }
        let v = self.vtcn.forward(g, store, v)?;
        upsample(g, v, k, self.config.upsample)
    }
}

/// Stretches `[B, D, F]` to `[B, D, K]` along time.
pub fn upsample(g: &mut Graph, v: Var, k: usize, mode: UpsampleMode) -> Result<Var> {
    let (_, _, f) = g.value(v).dims3()?;
    if k < f {
        return invalid(format!("cannot upsample {f} frames to {k}"));
    }
    Ok(match mode {
        UpsampleMode::Repeat => g.upsample_repeat(v, k)?,
        UpsampleMode::Linear => g.upsample_linear(v, k)?,
    })
}
