//! Mixing a target with one or two interferers at per-interferer SNRs.

use crate::{invalid, MuseError, Result};

/// Peak level of every normalised mixture.
pub const PEAK_LEVEL: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub mixture: Vec<f64>,
    /// Target after the shared gain; the extraction reference.
    pub target: Vec<f64>,
    /// Interferer amplitude scales before the shared gain.
    pub scales: Vec<f64>,
    pub gain: f64,
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Scales each interferer so that `10 log10(P_target / P_i) = snr_db[i]`
/// over the common (truncated) span, sums, and peak-normalises.
pub fn mix(target: &[f64], interferers: &[&[f64]], snr_db: &[f64]) -> Result<Mixture> {
    if interferers.len() != snr_db.len() || !(1..=2).contains(&interferers.len()) {
        return invalid(format!("{} interferers with {} SNR values", interferers.len(), snr_db.len()));
    }
    let len = interferers.iter().map(|i| i.len()).min().unwrap_or(0).min(target.len());
    if len == 0 {
        return invalid("cannot mix empty signals");
    }
    let target = &target[..len];
    let p_t = power(target);
    if p_t <= 0.0 {
        return Err(MuseError::Data("silent target".into()));
    }
    let mut mixture = target.to_vec();
    let mut scales = Vec::with_capacity(interferers.len());
    for (x, &snr) in interferers.iter().zip(snr_db) {
        let x = &x[..len];
        let p_i = power(x);
        if p_i <= 0.0 {
            return Err(MuseError::Data("silent interferer".into()));
        }
        let scale = (p_t / (p_i * 10f64.powf(snr / 10.0))).sqrt();
        for (m, v) in mixture.iter_mut().zip(x) {
            *m += scale * v;
        }
        scales.push(scale);
    }
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = PEAK_LEVEL / peak;
    mixture.iter_mut().for_each(|v| *v *= gain);
    let target = target.iter().map(|v| v * gain).collect();
    Ok(Mixture { mixture, target, scales, gain })
}
