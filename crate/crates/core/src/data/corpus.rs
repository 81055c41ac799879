//! Loads a generated dataset into memory and assembles model batches.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use muse_autograd::Tensor;

use super::manifest::{read_jsonl, MixtureManifestEntry, Split, UtteranceRecord};
use super::synth::{render_lips, SAMPLES_PER_FRAME};
use super::{io, mix, DatasetInfo, INFO_FILE, UTTERANCES_FILE};
use crate::model::ModelInput;
use crate::visual_frontend::{keep_mask, FrontendKind, VisualInput};
use crate::{invalid, MuseError, Result};

struct Utterance {
    audio: Vec<f64>,
    /// Row-major `[F, E]`.
    visual: Vec<f64>,
    frames: usize,
}

/// One mixture ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub mixture_id: String,
    pub mixture: Vec<f64>,
    /// Gain-matched clean target.
    pub target: Vec<f64>,
    /// Channel-major `[E, F]` features of the target speaker.
    pub visual: Vec<f64>,
    pub frames: usize,
    pub feature_dim: usize,
    /// Per-frame visibility (0 where occluded).
    pub keep: Vec<f64>,
    pub speaker: Option<usize>,
}

impl Example {
    pub fn samples(&self) -> usize {
        self.mixture.len()
    }

    /// `frames` video frames starting at `start`, zero-padded past the end.
    pub fn crop(&self, start: usize, frames: usize) -> Example {
        let t = frames * SAMPLES_PER_FRAME;
        let s0 = start * SAMPLES_PER_FRAME;
        let take = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; t];
            let avail = x.len().saturating_sub(s0).min(t);
            out[..avail].copy_from_slice(&x[s0..s0 + avail]);
            out
        };
        let avail_f = self.frames.saturating_sub(start).min(frames);
        let mut visual = vec![0.0; self.feature_dim * frames];
        for e in 0..self.feature_dim {
            let src = &self.visual[e * self.frames + start..e * self.frames + start + avail_f];
            visual[e * frames..e * frames + avail_f].copy_from_slice(src);
        }
        let mut keep = vec![1.0; frames];
        keep[..avail_f].copy_from_slice(&self.keep[start..start + avail_f]);
        Example {
            mixture_id: self.mixture_id.clone(),
            mixture: take(&self.mixture),
            target: take(&self.target),
            visual,
            frames,
            feature_dim: self.feature_dim,
            keep,
            speaker: self.speaker,
        }
    }
}

/// A stacked batch of equal-length examples.
#[derive(Clone, Debug)]
pub struct Batch {
    pub ids: Vec<String>,
    pub input: ModelInput,
    /// `[B, T]` references.
    pub targets: Tensor,
    pub labels: Vec<Option<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn new(examples: &[Example], frontend: FrontendKind, image_size: usize) -> Result<Batch> {
        let first = examples.first().ok_or_else(|| MuseError::Invalid("empty batch".into()))?;
        let (t, f, e) = (first.samples(), first.frames, first.feature_dim);
        if examples.iter().any(|x| x.samples() != t || x.frames != f || x.feature_dim != e) {
            return invalid("batch examples differ in length");
        }
        let b = examples.len();
        let stack = |get: &dyn Fn(&Example) -> &[f64], shape: &[usize]| -> Result<Tensor> {
            let data: Vec<f64> = examples.iter().flat_map(|x| get(x).iter().copied()).collect();
            Ok(Tensor::from_vec(shape, data)?)
        };
        let mixture = stack(&|x| &x.mixture, &[b, t])?;
        let targets = stack(&|x| &x.target, &[b, t])?;
        let keep = stack(&|x| &x.keep, &[b, f])?;
        let visual = match frontend {
            FrontendKind::Envelope => VisualInput::Envelope(stack(&|x| &x.visual, &[b, e, f])?),
            FrontendKind::Standin => {
                let mut data = Vec::with_capacity(b * f * image_size * image_size);
                for x in examples {
                    let rows: Vec<f64> = (0..f)
                        .flat_map(|fi| (0..e).map(move |ei| (fi, ei)))
                        .map(|(fi, ei)| x.visual[ei * f + fi])
                        .collect();
                    data.extend_from_slice(render_lips(&rows, f, e, image_size)?.data());
                }
                VisualInput::Images(Tensor::from_vec(&[b, 1, f, image_size, image_size], data)?)
            }
        };
        let occluded = examples.iter().any(|x| x.keep.contains(&0.0));
        Ok(Batch {
            ids: examples.iter().map(|x| x.mixture_id.clone()).collect(),
            input: ModelInput { mixture, visual, keep: occluded.then_some(keep) },
            targets,
            labels: examples.iter().map(|x| x.speaker).collect(),
        })
    }
}

/// A dataset held in memory.
pub struct Corpus {
    pub root: PathBuf,
    pub info: DatasetInfo,
    pub entries: Vec<MixtureManifestEntry>,
    utterances: HashMap<String, Utterance>,
}

impl Corpus {
    /// Opens the dataset whose manifest is at `manifest`; the utterance
    /// table and dataset info are read from the same directory.
    pub fn open(manifest: &Path) -> Result<Corpus> {
        let root = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
        let info: DatasetInfo = serde_json::from_slice(&fs::read(root.join(INFO_FILE))?)?;
        let entries: Vec<MixtureManifestEntry> = read_jsonl(manifest)?;
        for e in &entries {
            e.validate(info.num_speakers)?;
        }
        let records: Vec<UtteranceRecord> = read_jsonl(&root.join(UTTERANCES_FILE))?;
        let mut utterances = HashMap::with_capacity(records.len());
        for r in records {
            let audio = io::read_wav(&root.join(&r.wav))?;
            let (dims, visual) = io::read_tensor(&root.join(&r.visual))?;
            if dims != [r.frames, info.feature_dim] || audio.len() != r.frames * SAMPLES_PER_FRAME {
                return Err(MuseError::Data(format!("{}: audio/visual lengths disagree", r.utterance_id)));
            }
            utterances.insert(r.utterance_id, Utterance { audio, visual, frames: r.frames });
        }
        Ok(Corpus { root, info, entries, utterances })
    }

    pub fn split(&self, split: Split) -> Vec<&MixtureManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn num_speakers(&self) -> usize {
        self.info.num_speakers
    }

    pub fn feature_dim(&self) -> usize {
        self.info.feature_dim
    }

    fn utterance(&self, id: &str) -> Result<&Utterance> {
        self.utterances.get(id).ok_or_else(|| MuseError::Data(format!("unknown utterance `{id}`")))
    }

    /// Mixes an entry from its source utterances.
    pub fn example(&self, entry: &MixtureManifestEntry) -> Result<Example> {
        let target = self.utterance(&entry.target)?;
        let interferers = entry
            .interferers
            .iter()
            .map(|id| self.utterance(id).map(|u| u.audio.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let mixed = mix::mix(&target.audio, &interferers, &entry.snr_db)?;
        let frames = mixed.mixture.len() / SAMPLES_PER_FRAME;
        if frames != entry.frames || frames * SAMPLES_PER_FRAME != mixed.mixture.len() {
            return Err(MuseError::Data(format!("{}: mixture length disagrees with manifest", entry.mixture_id)));
        }
        let e = self.info.feature_dim;
        let mut visual = vec![0.0; e * frames];
        for f in 0..frames.min(target.frames) {
            for c in 0..e {
                visual[c * frames + f] = target.visual[f * e + c];
            }
        }
        let spans: Vec<(usize, usize)> = entry.occlusion.iter().map(|s| (s.start, s.len)).collect();
        Ok(Example {
            mixture_id: entry.mixture_id.clone(),
            mixture: mixed.mixture,
            target: mixed.target,
            visual,
            frames,
            feature_dim: e,
            keep: keep_mask(frames, &spans)?,
            speaker: entry.speaker_index,
        })
    }

    pub fn examples(&self, split: Split) -> Result<Vec<Example>> {
        self.split(split).into_iter().map(|e| self.example(e)).collect()
    }
}
