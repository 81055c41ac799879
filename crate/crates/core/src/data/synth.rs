//! Synthetic talkers: band-limited noise carriers shaped by a syllable-rate
//! envelope, with matching 25 fps "lip" features derived from that envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_codec::SAMPLE_RATE;
use crate::visual_frontend::{LipImageSequence, VIDEO_FPS};
use crate::{invalid, MuseError, Result};

/// Audio samples per video frame.
pub const SAMPLES_PER_FRAME: usize = SAMPLE_RATE as usize / VIDEO_FPS;
pub const MIN_DURATION_S: f64 = 4.0;
const MIN_FREQ_HZ: f64 = 200.0;
const MAX_FREQ_HZ: f64 = 6000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

impl Band {
    fn edges(&self) -> (f64, f64) {
        (self.center_hz - 0.5 * self.bandwidth_hz, self.center_hz + 0.5 * self.bandwidth_hz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeakerProfile {
    pub speaker_id: String,
    pub bands: Vec<Band>,
    /// Mean syllable rate.
    pub syllable_rate_hz: f64,
    /// Relative jitter of syllable spacing.
    pub rate_jitter: f64,
    /// Rate of the slow per-band gain drift.
    pub drift_rate_hz: f64,
    pub seed: u64,
}

impl SyntheticSpeakerProfile {
    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return invalid(format!("speaker {} has no bands", self.speaker_id));
        }
        for band in &self.bands {
            let (lo, hi) = band.edges();
            if !(band.bandwidth_hz > 0.0 && lo > 0.0 && hi < SAMPLE_RATE as f64 / 2.0) {
                return invalid(format!("speaker {} has a degenerate band {band:?}", self.speaker_id));
            }
        }
        if !(self.syllable_rate_hz > 0.0 && (0.0..1.0).contains(&self.rate_jitter) && self.drift_rate_hz >= 0.0) {
            return invalid(format!("speaker {} has degenerate modulation statistics", self.speaker_id));
        }
        Ok(())
    }

    /// Draws a random profile with `bands` non-overlapping bands.
    pub fn random(speaker_id: &str, bands: usize, seed: u64) -> Result<Self> {
        if bands == 0 {
            return invalid("a speaker needs at least one band");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (MIN_FREQ_HZ.ln(), MAX_FREQ_HZ.ln());
        for _ in 0..10_000 {
            let mut out: Vec<Band> = (0..bands)
                .map(|_| {
                    let center_hz = rng.random_range(lo..hi).exp();
                    let bandwidth_hz = center_hz * rng.random_range(0.08..0.16);
                    Band { center_hz, bandwidth_hz }
                })
                .collect();
            out.sort_by(|a, b| a.center_hz.total_cmp(&b.center_hz));
            if out.windows(2).all(|w| w[1].center_hz > 1.3 * w[0].center_hz) {
                let profile = SyntheticSpeakerProfile {
                    speaker_id: speaker_id.to_string(),
                    bands: out,
                    syllable_rate_hz: rng.random_range(3.0..6.0),
                    rate_jitter: rng.random_range(0.1..0.3),
                    drift_rate_hz: rng.random_range(0.3..1.2),
                    seed,
                };
                profile.validate()?;
                return Ok(profile);
            }
        }
        Err(MuseError::Data(format!("could not place {bands} separated bands")))
    }

    /// Normalised band-occupancy density on a 1 Hz grid.
    fn density(&self) -> Vec<f64> {
        let nyquist = SAMPLE_RATE as usize / 2;
        let mut p = vec![0.0; nyquist];
        let weight = 1.0 / self.bands.len() as f64;
        for band in &self.bands {
            let (lo, hi) = band.edges();
            let (a, b) = (lo.floor().max(0.0) as usize, (hi.ceil() as usize).min(nyquist));
            let per_bin = weight / (b - a).max(1) as f64;
            for v in &mut p[a..b] {
                *v += per_bin;
            }
        }
        p
    }
}

/// Histogram intersection of two profiles' band densities, in `[0, 1]`.
pub fn spectral_overlap(a: &SyntheticSpeakerProfile, b: &SyntheticSpeakerProfile) -> f64 {
    a.density().iter().zip(b.density()).map(|(x, y)| x.min(y)).sum()
}

pub fn mean_pairwise_overlap(profiles: &[SyntheticSpeakerProfile]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..profiles.len() {
        for j in i + 1..profiles.len() {
            total += spectral_overlap(&profiles[i], &profiles[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Pairwise overlap above which two speakers count as near-duplicates.
pub const MAX_PAIR_OVERLAP: f64 = 0.5;

/// Generates `count` profiles, redrawing any candidate whose mean overlap
/// with the speakers drawn so far exceeds `max_mean_overlap` or whose overlap
/// with any single one exceeds [`MAX_PAIR_OVERLAP`].
pub fn generate_profiles(
    count: usize,
    bands: usize,
    max_mean_overlap: f64,
    seed: u64,
) -> Result<Vec<SyntheticSpeakerProfile>> {
    let mut out: Vec<SyntheticSpeakerProfile> = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        if attempt > 1000 * (count as u64 + 1) {
            return Err(MuseError::Data(format!(
                "cannot fit {count} speakers below mean spectral overlap {max_mean_overlap}"
            )));
        }
        let id = format!("spk{:03}", out.len());
        let candidate = SyntheticSpeakerProfile::random(&id, bands, derive_seed(seed, &[1, attempt]))?;
        attempt += 1;
        let overlaps: Vec<f64> = out.iter().map(|p| spectral_overlap(p, &candidate)).collect();
        let mean = overlaps.iter().sum::<f64>() / overlaps.len().max(1) as f64;
        if mean <= max_mean_overlap && overlaps.iter().all(|&o| o <= MAX_PAIR_OVERLAP) {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// SplitMix64-style seed derivation so sub-streams do not collide.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Rounds a duration to whole video frames.
pub fn frames_for(duration_s: f64) -> usize {
    (duration_s * VIDEO_FPS as f64).round() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthUtterance {
    pub samples: Vec<f64>,
    /// Row-major `[F, E]` features.
    pub visual: Vec<f64>,
    pub frames: usize,
    pub feature_dim: usize,
}

impl SynthUtterance {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Column `e` of the feature matrix.
    pub fn feature(&self, e: usize) -> Vec<f64> {
        (0..self.frames).map(|f| self.visual[f * self.feature_dim + e]).collect()
    }
}

/// Number of visual features produced for a profile: envelope, its frame
/// difference and one energy per band.
pub fn min_feature_dim(profile: &SyntheticSpeakerProfile) -> usize {
    2 + profile.bands.len()
}

/// Renders one utterance. The duration is rounded to whole video frames so
/// that `T = 640 F` exactly.
pub fn synth_utterance(
    profile: &SyntheticSpeakerProfile,
    duration_s: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<SynthUtterance> {
    profile.validate()?;
    if !(duration_s >= MIN_DURATION_S) {
        return invalid(format!("utterance duration {duration_s} s is below {MIN_DURATION_S} s"));
    }
    if feature_dim < min_feature_dim(profile) {
        return invalid(format!("feature dim {feature_dim} cannot hold {} bands", profile.bands.len()));
    }
    let frames = frames_for(duration_s);
    let t_len = frames * SAMPLES_PER_FRAME;
    let fs = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let envelope = syllable_envelope(profile, t_len, &mut rng);
    let drift: Vec<(f64, f64)> =
        profile.bands.iter().map(|_| (rng.random_range(0.0..2.0 * PI), rng.random_range(0.7..1.3))).collect();
    let gain = |b: usize, n: usize| -> f64 {
        let (phase, rate_scale) = drift[b];
        1.0 + 0.25 * (2.0 * PI * profile.drift_rate_hz * rate_scale * n as f64 / fs + phase).sin()
    };

    let mut samples = vec![0.0; t_len];
    for (b, band) in profile.bands.iter().enumerate() {
        let noise: Vec<f64> = (0..t_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let carrier = band_pass(&band_pass(&noise, band), band);
        let rms = (carrier.iter().map(|x| x * x).sum::<f64>() / t_len as f64).sqrt();
        if rms <= 0.0 {
            return Err(MuseError::Data(format!("band {band:?} produced a silent carrier")));
        }
        for (n, s) in samples.iter_mut().enumerate() {
            *s += envelope[n] * gain(b, n) * carrier[n] / rms;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak <= 0.0 {
        return Err(MuseError::Data("utterance is silent".into()));
    }
    let scale = 0.5 / peak;
    samples.iter_mut().for_each(|s| *s *= scale);

    let mut visual = vec![0.0; frames * feature_dim];
    let mut prev = 0.0;
    for f in 0..frames {
        let span = &envelope[f * SAMPLES_PER_FRAME..(f + 1) * SAMPLES_PER_FRAME];
        let env = (span.iter().map(|x| x * x).sum::<f64>() / span.len() as f64).sqrt();
        let mid = f * SAMPLES_PER_FRAME + SAMPLES_PER_FRAME / 2;
        let row = &mut visual[f * feature_dim..(f + 1) * feature_dim];
        row[0] = env;
        row[1] = env - prev;
        for b in 0..profile.bands.len() {
            row[2 + b] = env * gain(b, mid);
        }
        prev = env;
    }
    Ok(SynthUtterance { samples, visual, frames, feature_dim })
}

/// Raised-cosine syllable bumps with occasional pauses.
fn syllable_envelope(profile: &SyntheticSpeakerProfile, t_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let mut env = vec![0.0; t_len];
    let mut t0 = rng.random_range(0.0..0.1);
    let jitter = profile.rate_jitter;
    while t0 * fs < t_len as f64 {
        let interval = rng.random_range(1.0 - jitter..1.0 + jitter) / profile.syllable_rate_hz;
        let pause = rng.random_bool(0.15);
        let amp = rng.random_range(0.4..1.0);
        let dur = interval * rng.random_range(0.6..0.9);
        if !pause {
            let start = (t0 * fs) as usize;
            let len = (dur * fs) as usize;
            for i in 0..len.min(t_len.saturating_sub(start)) {
                let s = (PI * i as f64 / len as f64).sin();
                env[start + i] += amp * s * s;
            }
        }
        t0 += interval;
    }
    env
}

/// RBJ band-pass biquad with 0 dB peak gain.
fn band_pass(x: &[f64], band: &Band) -> Vec<f64> {
    let w0 = 2.0 * PI * band.center_hz / SAMPLE_RATE as f64;
    let q = band.center_hz / band.bandwidth_hz;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&x0| {
            let y0 = b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            y0
        })
        .collect()
}

/// Audio RMS per video frame.
pub fn frame_rms(samples: &[f64]) -> Vec<f64> {
    samples
        .chunks_exact(SAMPLES_PER_FRAME)
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

/// Draws a mouth-like ellipse per frame whose opening follows the envelope
/// feature and whose width follows the first band energy.
pub fn render_lips(features: &[f64], frames: usize, feature_dim: usize, size: usize) -> Result<LipImageSequence> {
    if features.len() != frames * feature_dim || size == 0 {
        return invalid("lip rendering needs [F, E] features and a positive size");
    }
    let peak = (0..frames).map(|f| features[f * feature_dim]).fold(1e-9f64, f64::max);
    let mut data = vec![0.0; frames * size * size];
    let c = (size as f64 - 1.0) / 2.0;
    for f in 0..frames {
        let open = features[f * feature_dim] / peak;
        let width = if feature_dim > 2 { features[f * feature_dim + 2] / peak } else { open };
        let ry = 0.05 + 0.35 * open.clamp(0.0, 1.0);
        let rx = 0.25 + 0.2 * width.clamp(0.0, 1.5);
        let img = &mut data[f * size * size..(f + 1) * size * size];
        for y in 0..size {
            for x in 0..size {
                let dx = (x as f64 - c) / size as f64;
                let dy = (y as f64 - c) / size as f64;
                let r = (dx / rx).powi(2) + (dy / ry).powi(2);
                img[y * size + x] = if r <= 1.0 { 1.0 - 0.5 * r } else { 0.0 };
            }
        }
    }
    LipImageSequence::new(frames, size, size, data)
}
