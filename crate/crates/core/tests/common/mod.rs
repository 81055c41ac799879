#![allow(dead_code)]

use muse_autograd::Tensor;
use muse_core::audio_codec::CodecParams;
use muse_core::data::corpus::Example;
use muse_core::speaker_extractor::ExtractorConfig;
use muse_core::visual_frontend::{VisualConfig, VisualInput};
use muse_core::{ModelConfig, ModelInput, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const E: usize = 8;

/// Small model: N=8, visual width 8, R=2, D=3.
pub fn tiny_config(variant: Variant, classes: usize) -> ModelConfig {
    let codec = CodecParams { kernel: 40, channels: 8, encoder_relu: false };
    let visual = VisualConfig { embed_dim: 8, vtcn_blocks: 2, envelope_dim: E, ..Default::default() };
    let extractor = ExtractorConfig { repeats: 2, tcn_blocks: 3, hidden: 8, speaker_dim: 8, ..Default::default() };
    ModelConfig::new(codec, visual, &extractor, variant, classes, 11)
}

pub fn random_input(b: usize, frames: usize, seed: u64) -> (ModelInput, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = frames * 640;
    let mix: Vec<f64> = (0..b * t).map(|_| rng.random_range(-0.5..0.5)).collect();
    let target: Vec<f64> = mix.iter().map(|v| 0.6 * v + rng.random_range(-0.05..0.05)).collect();
    let vis: Vec<f64> = (0..b * E * frames).map(|_| rng.random_range(0.0..1.0)).collect();
    let input = ModelInput {
        mixture: Tensor::from_vec(&[b, t], mix).unwrap(),
        visual: VisualInput::Envelope(Tensor::from_vec(&[b, E, frames], vis).unwrap()),
        keep: None,
    };
    (input, Tensor::from_vec(&[b, t], target).unwrap())
}

/// Random examples with labels drawn from `classes`.
pub fn random_examples(n: usize, frames: usize, classes: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = frames * 640;
            let target: Vec<f64> = (0..t).map(|j| 0.3 * ((j as f64) * 0.05 * (1.0 + i as f64)).sin()).collect();
            let mixture: Vec<f64> = target.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
            Example {
                mixture_id: format!("m{i}"),
                mixture,
                target,
                visual: (0..E * frames).map(|_| rng.random_range(0.0..1.0)).collect(),
                frames,
                feature_dim: E,
                keep: vec![1.0; frames],
                speaker: Some(i % classes),
            }
        })
        .collect()
}
