//! WAV (16-bit PCM mono) and visual feature tensor files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::audio_codec::SAMPLE_RATE;
use crate::{MuseError, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"MUSEVIS1";

pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(quantize(s))?;
    }
    w.finalize()?;
    Ok(())
}

pub fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn dequantize(s: i16) -> f64 {
    s as f64 / 32768.0
}

pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 || spec.sample_rate != SAMPLE_RATE || spec.bits_per_sample != 16 {
        return Err(MuseError::Data(format!(
            "{}: expected mono 16-bit {SAMPLE_RATE} Hz, got {} ch {} bit {} Hz",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_rate
        )));
    }
    r.samples::<i16>().map(|s| Ok(dequantize(s?))).collect()
}

/// Writes a tensor as magic, `u32` rank, `u32` dims, then `f32` values.
pub fn write_tensor(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    if dims.iter().product::<usize>() != values.len() {
        return Err(MuseError::Data(format!("dims {dims:?} do not match {} values", values.len())));
    }
    let mut buf = Vec::with_capacity(16 + 4 * dims.len() + 4 * values.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let bad = || MuseError::Data(format!("{}: malformed tensor file", path.display()));
    if bytes.len() < 12 || &bytes[..8] != TENSOR_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| -> Result<u32> {
        bytes.get(i..i + 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes"))).ok_or_else(bad)
    };
    let rank = word(8)? as usize;
    let dims = (0..rank).map(|i| word(12 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let start = 12 + 4 * rank;
    let n: usize = dims.iter().product();
    let body = &bytes[start..];
    if body.len() != 4 * n {
        return Err(bad());
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Ok((dims, values))
}
