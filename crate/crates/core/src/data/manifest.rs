//! Utterance records, mixture manifest entries and their JSON-lines files.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{MuseError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = MuseError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| MuseError::Invalid(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Paths relative to the dataset directory.
    pub wav: String,
    pub visual: String,
    pub duration_s: f64,
    pub frames: usize,
}

/// A zeroed range of visual frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionSpan {
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureManifestEntry {
    pub mixture_id: String,
    pub target: String,
    pub interferers: Vec<String>,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub occlusion: Vec<OcclusionSpan>,
    pub split: Split,
    /// Class index of the target among the training speakers; absent for
    /// speakers outside the training set.
    pub speaker_index: Option<usize>,
    /// Shared peak-normalisation gain applied to target and interferers.
    pub gain: f64,
    /// Visual frames in the mixed (truncated) span.
    pub frames: usize,
}

impl MixtureManifestEntry {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: String| Err(MuseError::Data(format!("{}: {m}", self.mixture_id)));
        if self.interferers.is_empty() || self.interferers.len() > 2 || self.interferers.len() != self.snr_db.len() {
            return bad(format!("{} interferers with {} SNRs", self.interferers.len(), self.snr_db.len()));
        }
        if let Some(snr) = self.snr_db.iter().find(|s| !(-10.0..=10.0).contains(*s)) {
            return bad(format!("SNR {snr} dB outside [-10, 10]"));
        }
        if let Some(y) = self.speaker_index {
            if y >= classes {
                return bad(format!("speaker index {y} >= {classes}"));
            }
        }
        for span in &self.occlusion {
            if span.start + span.len > self.frames {
                return bad(format!("occlusion {span:?} exceeds {} frames", self.frames));
            }
        }
        Ok(())
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Rejects speaker lists that share any speaker.
pub fn check_disjoint(a: &[String], b: &[String]) -> Result<()> {
    let set: BTreeSet<&String> = a.iter().collect();
    match b.iter().find(|s| set.contains(s)) {
        Some(s) => Err(MuseError::Data(format!("speaker {s} appears in both train and test sets"))),
        None => Ok(()),
    }
}
