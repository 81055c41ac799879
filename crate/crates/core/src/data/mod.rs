//! Synthetic audio-visual corpus: speakers, utterances, mixtures, occlusion.

pub mod corpus;
pub mod io;
pub mod manifest;
pub mod mix;
pub mod occlusion;
pub mod synth;

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use manifest::{check_disjoint, write_jsonl, MixtureManifestEntry, Split, UtteranceRecord};
use synth::{derive_seed, generate_profiles, mean_pairwise_overlap, synth_utterance, SyntheticSpeakerProfile};

use crate::{invalid, MuseError, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const UTTERANCES_FILE: &str = "utterances.jsonl";
pub const INFO_FILE: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_speakers: usize,
    pub test_speakers: usize,
    pub train_mixtures: usize,
    pub val_mixtures: usize,
    pub test_mixtures: usize,
    /// Utterances generated per speaker.
    pub utterances_per_speaker: usize,
    /// Of those, how many per training speaker are reserved for validation.
    pub val_utterances_per_speaker: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Allowed speaker counts per mixture (2 and/or 3).
    pub speakers_per_mixture: Vec<usize>,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub bands_per_speaker: usize,
    /// Visual feature dimension `E`.
    pub feature_dim: usize,
    pub max_spectral_overlap: f64,
    pub occlusion_fraction: f64,
    pub occlusion_min: f64,
    pub occlusion_max: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_speakers: 8,
            test_speakers: 4,
            train_mixtures: 200,
            val_mixtures: 50,
            test_mixtures: 50,
            utterances_per_speaker: 10,
            val_utterances_per_speaker: 3,
            min_duration_s: 4.0,
            max_duration_s: 5.0,
            speakers_per_mixture: vec![2],
            snr_db_min: -10.0,
            snr_db_max: 10.0,
            bands_per_speaker: 3,
            feature_dim: 8,
            max_spectral_overlap: 0.1,
            occlusion_fraction: 0.5,
            occlusion_min: 0.1,
            occlusion_max: 0.8,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_speakers < 2 || self.test_speakers < 2 {
            return invalid("each speaker set needs at least two speakers");
        }
        if self.speakers_per_mixture.is_empty() || self.speakers_per_mixture.iter().any(|n| !(2..=3).contains(n)) {
            return invalid(format!("speakers per mixture {:?} must be 2 or 3", self.speakers_per_mixture));
        }
        let most = *self.speakers_per_mixture.iter().max().expect("non-empty");
        if most > self.test_speakers || most > self.train_speakers {
            return invalid(format!("{most}-speaker mixtures need at least {most} speakers per set"));
        }
        if self.val_utterances_per_speaker >= self.utterances_per_speaker
            || (self.val_mixtures > 0 && self.val_utterances_per_speaker == 0)
        {
            return invalid("validation utterances must leave training utterances and cover val mixtures");
        }
        if !(self.min_duration_s >= synth::MIN_DURATION_S && self.max_duration_s >= self.min_duration_s) {
            return invalid(format!("durations must satisfy {} <= min <= max", synth::MIN_DURATION_S));
        }
        if !(-10.0 <= self.snr_db_min && self.snr_db_min <= self.snr_db_max && self.snr_db_max <= 10.0) {
            return invalid("SNR range must lie within [-10, 10] dB");
        }
        if self.feature_dim < 2 + self.bands_per_speaker {
            return invalid(format!("feature_dim must be at least {}", 2 + self.bands_per_speaker));
        }
        Ok(())
    }
}

/// Contents of `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    /// Number of training speakers `C`.
    pub num_speakers: usize,
    pub feature_dim: usize,
    pub train_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    pub mean_spectral_overlap: f64,
    pub profiles: Vec<SyntheticSpeakerProfile>,
    pub config: DatasetConfig,
}

/// Generates the corpus into `out`: WAV and visual files per utterance,
/// `utterances.jsonl`, `manifest.jsonl` (occlusion already applied) and
/// `dataset.json`.
pub fn build_dataset(config: &DatasetConfig, out: &Path) -> Result<DatasetInfo> {
    config.validate()?;
    let total = config.train_speakers + config.test_speakers;
    let profiles = generate_profiles(total, config.bands_per_speaker, config.max_spectral_overlap, config.seed)?;
    let ids: Vec<String> = profiles.iter().map(|p| p.speaker_id.clone()).collect();
    let (train_ids, test_ids) = ids.split_at(config.train_speakers);
    check_disjoint(train_ids, test_ids)?;

    fs::create_dir_all(out.join("wav"))?;
    fs::create_dir_all(out.join("visual"))?;
    let mut records = Vec::new();
    // Quantised audio per speaker and utterance, as it will be read back.
    let mut audio: Vec<Vec<Vec<f64>>> = Vec::with_capacity(total);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[2]));
    for (s, profile) in profiles.iter().enumerate() {
        let mut per_speaker = Vec::with_capacity(config.utterances_per_speaker);
        for u in 0..config.utterances_per_speaker {
            let duration = rng.random_range(config.min_duration_s..=config.max_duration_s);
            let seed = derive_seed(config.seed, &[3, s as u64, u as u64]);
            let utt = synth_utterance(profile, duration, config.feature_dim, seed)?;
            let utterance_id = format!("{}_u{u:02}", profile.speaker_id);
            let wav = format!("wav/{utterance_id}.wav");
            let visual = format!("visual/{utterance_id}.bin");
            io::write_wav(&out.join(&wav), &utt.samples)?;
            io::write_tensor(&out.join(&visual), &[utt.frames, utt.feature_dim], &utt.visual)?;
            per_speaker.push(utt.samples.iter().map(|&x| io::dequantize(io::quantize(x))).collect());
            records.push(UtteranceRecord {
                utterance_id,
                speaker_id: profile.speaker_id.clone(),
                wav,
                visual,
                duration_s: utt.duration_s(),
                frames: utt.frames,
            });
        }
        audio.push(per_speaker);
    }

    let n_val = config.val_utterances_per_speaker;
    let n_utt = config.utterances_per_speaker;
    let pools: [(Split, Vec<usize>, std::ops::Range<usize>, usize); 3] = [
        (Split::Train, (0..config.train_speakers).collect(), 0..n_utt - n_val, config.train_mixtures),
        (Split::Val, (0..config.train_speakers).collect(), n_utt - n_val..n_utt, config.val_mixtures),
        (Split::Test, (config.train_speakers..total).collect(), 0..n_utt, config.test_mixtures),
    ];
    let mut entries = Vec::new();
    for (split_idx, (split, speakers, utts, count)) in pools.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[4, split_idx as u64]));
        let mut split_entries = Vec::with_capacity(*count);
        for i in 0..*count {
            let n_spk = *config.speakers_per_mixture.choose(&mut rng).expect("validated");
            let chosen: Vec<usize> = speakers.choose_multiple(&mut rng, n_spk).copied().collect();
            let picks: Vec<(usize, usize)> = chosen.iter().map(|&s| (s, rng.random_range(utts.clone()))).collect();
            let snr_db: Vec<f64> =
                (1..n_spk).map(|_| rng.random_range(config.snr_db_min..=config.snr_db_max)).collect();
            let utt_id = |(s, u): (usize, usize)| format!("{}_u{u:02}", ids[s]);
            let target = &audio[picks[0].0][picks[0].1];
            let interferers: Vec<&[f64]> = picks[1..].iter().map(|&(s, u)| audio[s][u].as_slice()).collect();
            let mixed = mix::mix(target, &interferers, &snr_db)?;
            let frames = mixed.mixture.len() / synth::SAMPLES_PER_FRAME;
            split_entries.push(MixtureManifestEntry {
                mixture_id: format!("{}{i:04}", split.as_str()),
                target: utt_id(picks[0]),
                interferers: picks[1..].iter().map(|&p| utt_id(p)).collect(),
                snr_db,
                occlusion: Vec::new(),
                split: *split,
                speaker_index: (*split != Split::Test).then_some(picks[0].0),
                gain: mixed.gain,
                frames,
            });
        }
        occlusion::apply_occlusion_policy(
            &mut split_entries,
            config.occlusion_fraction,
            (config.occlusion_min, config.occlusion_max),
            derive_seed(config.seed, &[5, split_idx as u64]),
        )?;
        entries.extend(split_entries);
    }
    for e in &entries {
        e.validate(config.train_speakers)?;
    }

    write_jsonl(&out.join(UTTERANCES_FILE), &records)?;
    write_jsonl(&out.join(MANIFEST_FILE), &entries)?;
    let info = DatasetInfo {
        num_speakers: config.train_speakers,
        feature_dim: config.feature_dim,
        train_speakers: train_ids.to_vec(),
        test_speakers: test_ids.to_vec(),
        mean_spectral_overlap: mean_pairwise_overlap(&profiles),
        profiles,
        config: config.clone(),
    };
    if info.mean_spectral_overlap > config.max_spectral_overlap {
        return Err(MuseError::Data(format!(
            "mean spectral overlap {:.3} exceeds {}",
            info.mean_spectral_overlap, config.max_spectral_overlap
        )));
    }
    fs::write(out.join(INFO_FILE), serde_json::to_vec_pretty(&info)?)?;
    Ok(info)
}
