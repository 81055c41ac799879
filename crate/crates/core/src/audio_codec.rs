//! Learnable time-domain analysis/synthesis.
//!
//! The encoder is a strided 1-D convolution with kernel `L` and hop `L/2`
//! producing an `N x K` speech embedding; the decoder projects every frame
//! back to `L` samples through its own basis and overlap-adds them.

use muse_autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::nn::ParamBuilder;
use crate::{invalid, MuseError, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecParams {
    /// Kernel length `L` in samples; the hop is `L/2`.
    pub kernel: usize,
    /// Embedding channels `N`.
    pub channels: usize,
    /// Apply a ReLU after the encoder convolution. Off by default, which
    /// keeps the encoder linear.
    pub encoder_relu: bool,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams { kernel: 40, channels: 256, encoder_relu: false }
    }
}

impl CodecParams {
    pub fn stride(&self) -> usize {
        self.kernel / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel < 2 || !self.kernel.is_multiple_of(2) {
            return invalid(format!("codec kernel must be even and >= 2, got {}", self.kernel));
        }
        if self.channels == 0 {
            return invalid("codec needs at least one channel");
        }
        Ok(())
    }
}

/// A mono 16 kHz waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformSegment {
    samples: Vec<f64>,
}

impl WaveformSegment {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite sample at index {i}"));
        }
        Ok(WaveformSegment { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    /// Zero-pads the tail so the length tiles with kernel `l` and hop `l/2`.
    pub fn padded(&self, l: usize) -> WaveformSegment {
        let mut samples = self.samples.clone();
        samples.resize(padded_len(self.samples.len(), l), 0.0);
        WaveformSegment { samples }
    }
}

/// Number of encoder frames, `K = 2(T - L)/L + 1`.
pub fn frame_count(t: usize, l: usize) -> Result<usize> {
    if l < 2 || !l.is_multiple_of(2) {
        return invalid(format!("kernel length must be even, got {l}"));
    }
    if t < l {
        return invalid(format!("signal of {t} samples is shorter than the kernel {l}"));
    }
    if !(t - l).is_multiple_of(l / 2) {
        return invalid(format!("{t} samples do not tile with kernel {l} and hop {}; pad first", l / 2));
    }
    Ok(2 * (t - l) / l + 1)
}

/// Smallest length `>= max(t, l)` accepted by [`frame_count`].
pub fn padded_len(t: usize, l: usize) -> usize {
    let hop = l / 2;
    if t <= l {
        return l;
    }
    l + (t - l).div_ceil(hop) * hop
}

/// Length produced by overlap-adding `k` frames of `l` samples at hop `l/2`.
pub fn synthesis_len(k: usize, l: usize) -> usize {
    (k.saturating_sub(1)) * (l / 2) + l
}

/// Encoder and decoder bases, both `N x L`.
#[derive(Clone, Debug)]
pub struct AudioCodec {
    pub params: CodecParams,
    pub encoder: ParamId,
    pub decoder: ParamId,
}

impl AudioCodec {
    pub fn new(pb: &mut ParamBuilder, params: CodecParams) -> Result<Self> {
        params.validate()?;
        let (n, l) = (params.channels, params.kernel);
        pb.scoped("codec", |pb| {
            Ok(AudioCodec {
                encoder: pb.uniform("encoder", &[n, l], l)?,
                decoder: pb.uniform("decoder", &[n, l], n)?,
                params,
            })
        })
    }

    /// `[B, T] -> [B, N, K]`. `T` must already tile (see [`padded_len`]).
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, wave: Var) -> Result<Var> {
        let (_, t) = g.value(wave).dims2()?;
        frame_count(t, self.params.kernel)?;
        let w = g.param(store, self.encoder);
        let x = g.frame_conv(wave, w, self.params.stride())?;
        Ok(if self.params.encoder_relu { g.relu(x) } else { x })
    }

    /// `[B, N, K] -> [B, T]`; `T` may trim at most `L/2 - 1` samples of tail
    /// padding from the raw synthesis length.
    pub fn decode(&self, g: &mut Graph, store: &ParamStore, s: Var, t: usize) -> Result<Var> {
        let (_, n, k) = g.value(s).dims3()?;
        if n != self.params.channels {
            return invalid(format!("decoder expects {} channels, got {n}", self.params.channels));
        }
        let raw = synthesis_len(k, self.params.kernel);
        if t > raw || raw - t >= self.params.stride() {
            return invalid(format!("{k} frames synthesise {raw} samples, inconsistent with T = {t}"));
        }
        let w = g.param(store, self.decoder);
        Ok(g.overlap_add(s, w, self.params.stride(), t)?)
    }

    /// Sets bases that reconstruct the input: rectangular framing in the
    /// encoder and a periodic Hann window in the decoder, whose half-overlapped
    /// copies sum to one. Needs `N >= L`. Only the first and last `L/2`
    /// samples are attenuated.
    pub fn set_pass_through(&self, store: &mut ParamStore) -> Result<()> {
        let (n, l) = (self.params.channels, self.params.kernel);
        if n < l {
            return invalid(format!("pass-through bases need N >= L ({n} < {l})"));
        }
        let mut enc = Tensor::zeros(&[n, l]);
        let mut dec = Tensor::zeros(&[n, l]);
        for i in 0..l {
            enc.data_mut()[i * l + i] = 1.0;
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / l as f64).cos());
            dec.data_mut()[i * l + i] = w;
        }
        store.set(self.encoder, enc)?;
        store.set(self.decoder, dec)?;
        Ok(())
    }
}

/// Point-wise masking `X ⊗ M`; shapes must match exactly.
pub fn apply_mask(g: &mut Graph, x: Var, m: Var) -> Result<Var> {
    if g.value(x).shape() != g.value(m).shape() {
        return Err(MuseError::Invalid(format!(
            "mask {:?} does not match embedding {:?}",
            g.value(m).shape(),
            g.value(x).shape()
        )));
    }
    Ok(g.mul(x, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec(n: usize, l: usize) -> (AudioCodec, ParamStore) {
        let mut store = ParamStore::new();
        let params = CodecParams { kernel: l, channels: n, encoder_relu: false };
        let c = AudioCodec::new(&mut ParamBuilder::new(&mut store, 3), params).unwrap();
        (c, store)
    }

    #[test]
    fn frame_count_examples() {
        assert_eq!(frame_count(40, 40).unwrap(), 1);
        assert_eq!(frame_count(16000, 40).unwrap(), 799);
        assert_eq!(frame_count(64000, 40).unwrap(), 3199);
        assert!(frame_count(41, 40).is_err());
        assert!(frame_count(39, 40).is_err());
    }

    #[test]
    fn padding_tiles() {
        for t in [1, 39, 40, 41, 59, 60, 61, 16001] {
            let p = padded_len(t, 40);
            assert!(p >= t && p - t.max(40) < 20);
            assert!(frame_count(p, 40).is_ok());
        }
    }

    #[test]
    fn encode_shape_and_zero() {
        let (c, store) = codec(256, 40);
        let mut g = Graph::inference();
        let x = g.input(Tensor::zeros(&[1, 16000]));
        let e = c.encode(&mut g, &store, x).unwrap();
        assert_eq!(g.value(e).shape(), &[1, 256, 799]);
        assert!(g.value(e).data().iter().all(|&v| v == 0.0));
        let short = g.input(Tensor::zeros(&[1, 30]));
        assert!(c.encode(&mut g, &store, short).is_err());
    }

    #[test]
    fn decode_length_and_rejection() {
        let (c, store) = codec(8, 40);
        let mut g = Graph::inference();
        let s = g.input(Tensor::zeros(&[1, 8, 799]));
        assert_eq!(synthesis_len(799, 40), 16000);
        let y = c.decode(&mut g, &store, s, 16000).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 16000]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        assert!(c.decode(&mut g, &store, s, 16001).is_err());
        assert!(c.decode(&mut g, &store, s, 15980).is_err());
    }

    #[test]
    fn mask_examples() {
        let mut g = Graph::inference();
        let x = g.input(Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap());
        let m = g.input(Tensor::from_vec(&[1, 1, 1], vec![0.5]).unwrap());
        let y = apply_mask(&mut g, x, m).unwrap();
        assert_eq!(g.value(y).data(), &[1.0]);
        let bad = g.input(Tensor::zeros(&[1, 2, 1]));
        assert!(apply_mask(&mut g, x, bad).is_err());
    }

    #[test]
    fn pass_through_reconstructs_interior() {
        let (c, mut store) = codec(40, 40);
        c.set_pass_through(&mut store).unwrap();
        let wave: Vec<f64> = (0..400).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut g = Graph::inference();
        let x = g.input(Tensor::from_vec(&[1, 400], wave.clone()).unwrap());
        let e = c.encode(&mut g, &store, x).unwrap();
        let y = c.decode(&mut g, &store, e, 400).unwrap();
        for i in 20..380 {
            assert!((g.value(y).data()[i] - wave[i]).abs() < 1e-12);
        }
    }
}
