use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use muse_autograd::{Graph, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::audio_codec::{padded_len, AudioCodec, CodecParams};
use crate::data::corpus::{Batch, Example};
use crate::data::io::write_wav;
use crate::model::MuseNet;
use crate::nn::ParamBuilder;
use crate::objectives::{si_sdr, si_sdri};
use crate::{invalid, MuseError, Result};

pub const PESQ_ENV: &str = "MUSE_PESQ_BIN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub utterance_id: String,
    pub si_sdr_est: f64,
    pub si_sdr_mix: f64,
    pub si_sdri: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pesq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
}

impl EvalReport {
    pub fn mean_si_sdri(&self) -> f64 {
        self.records.iter().map(|r| r.si_sdri).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn median_si_sdri(&self) -> f64 {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.si_sdri).collect();
        median(&mut v)
    }

    pub fn mean_pesq(&self) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter_map(|r| r.pesq).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_jsonl()?)?;
        Ok(())
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// External PESQ scorer: invoked as `<bin> <reference.wav> <degraded.wav>`
/// and expected to print the score as the last whitespace-separated token.
#[derive(Clone, Debug)]
pub struct PesqHook {
    pub bin: PathBuf,
    pub scratch: PathBuf,
}

impl PesqHook {
    /// Hook configured by `MUSE_PESQ_BIN`, if set.
    pub fn from_env(scratch: &Path) -> Option<PesqHook> {
        std::env::var_os(PESQ_ENV).map(|bin| PesqHook { bin: bin.into(), scratch: scratch.to_path_buf() })
    }

    pub fn score(&self, id: &str, reference: &[f64], estimate: &[f64]) -> Result<f64> {
        std::fs::create_dir_all(&self.scratch)?;
        let r = self.scratch.join(format!("{id}.ref.wav"));
        let e = self.scratch.join(format!("{id}.est.wav"));
        write_wav(&r, reference)?;
        write_wav(&e, estimate)?;
        let out = Command::new(&self.bin).arg(&r).arg(&e).output()?;
        let text = String::from_utf8_lossy(&out.stdout);
        let _ = std::fs::remove_file(&r);
        let _ = std::fs::remove_file(&e);
        if !out.status.success() {
            return Err(MuseError::Invalid(format!("PESQ tool failed on {id}: {}", out.status)));
        }
        text.split_whitespace()
            .last()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| MuseError::Invalid(format!("PESQ tool printed no score for {id}")))
    }
}

/// Scores each example with `estimate`, which must return a waveform as
/// long as the mixture.
pub fn evaluate_with(
    examples: &[Example],
    pesq: Option<&PesqHook>,
    mut estimate: impl FnMut(&Example) -> Result<Vec<f64>>,
) -> Result<EvalReport> {
    let mut records = Vec::with_capacity(examples.len());
    for ex in examples {
        let est = estimate(ex)?;
        if est.len() != ex.target.len() {
            return invalid(format!(
                "{}: estimate has {} samples, reference {}",
                ex.mixture_id,
                est.len(),
                ex.target.len()
            ));
        }
        let si_sdr_est = si_sdr(&est, &ex.target)?;
        let si_sdr_mix = si_sdr(&ex.mixture, &ex.target)?;
        let pesq = pesq.map(|h| h.score(&ex.mixture_id, &ex.target, &est)).transpose()?;
        records.push(MetricRecord {
            utterance_id: ex.mixture_id.clone(),
            si_sdr_est,
            si_sdr_mix,
            si_sdri: si_sdri(&est, &ex.target, &ex.mixture)?,
            pesq,
        });
    }
    Ok(EvalReport { records })
}

/// Full-length extraction of one example; never evaluates the heads.
pub fn extract(net: &MuseNet, ex: &Example) -> Result<Vec<f64>> {
    let v = &net.config.visual;
    let batch = Batch::new(std::slice::from_ref(ex), v.frontend, v.image_size)?;
    Ok(net.separate(&batch.input)?.into_data())
}

pub fn evaluate(net: &MuseNet, examples: &[Example], pesq: Option<&PesqHook>) -> Result<EvalReport> {
    evaluate_with(examples, pesq, |ex| extract(net, ex))
}

/// Encode, apply an all-ones mask and decode with a pass-through codec.
pub struct IdentityModel {
    codec: AudioCodec,
    store: ParamStore,
}

impl IdentityModel {
    pub fn new(params: CodecParams) -> Result<Self> {
        let mut store = ParamStore::new();
        let codec = AudioCodec::new(&mut ParamBuilder::new(&mut store, 0), params)?;
        codec.set_pass_through(&mut store)?;
        Ok(IdentityModel { codec, store })
    }

    pub fn estimate(&self, mixture: &[f64]) -> Result<Vec<f64>> {
        let t = mixture.len();
        let mut padded = mixture.to_vec();
        padded.resize(padded_len(t, self.codec.params.kernel), 0.0);
        let mut g = Graph::inference();
        let wave = g.input(Tensor::from_vec(&[1, padded.len()], padded)?);
        let s = self.codec.encode(&mut g, &self.store, wave)?;
        let ones = g.input(Tensor::full(g.value(s).shape(), 1.0));
        let masked = crate::audio_codec::apply_mask(&mut g, s, ones)?;
        let out = self.codec.decode(&mut g, &self.store, masked, t)?;
        Ok(g.value(out).clone().into_data())
    }
}
