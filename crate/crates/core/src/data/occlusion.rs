//! Random contiguous visual occlusion on a fixed fraction of mixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{MixtureManifestEntry, OcclusionSpan};
use crate::{invalid, Result};

/// Span-length bounds `[ceil(lo F), floor(hi F)]` for `frames` frames.
pub fn span_bounds(frames: usize, pct_range: (f64, f64)) -> (usize, usize) {
    let lo = (pct_range.0 * frames as f64 - 1e-9).ceil().max(1.0) as usize;
    let hi = (pct_range.1 * frames as f64 + 1e-9).floor() as usize;
    (lo, hi)
}

/// Marks `round(fraction * n)` seeded-random entries with one contiguous
/// zeroed span each; all other entries lose any previous occlusion.
pub fn apply_occlusion_policy(
    entries: &mut [MixtureManifestEntry],
    mixture_fraction: f64,
    pct_range: (f64, f64),
    seed: u64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&mixture_fraction) {
        return invalid(format!("occlusion fraction {mixture_fraction} outside [0, 1]"));
    }
    if !(0.0 < pct_range.0 && pct_range.0 <= pct_range.1 && pct_range.1 <= 1.0) {
        return invalid(format!("occlusion range {pct_range:?} is not within (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut rng);
    let chosen = (mixture_fraction * entries.len() as f64).round() as usize;
    for e in entries.iter_mut() {
        e.occlusion.clear();
    }
    for &i in &order[..chosen] {
        let frames = entries[i].frames;
        let (lo, hi) = span_bounds(frames, pct_range);
        if lo > hi {
            return invalid(format!("{} frames admit no occlusion span", frames));
        }
        let pct = rng.random_range(pct_range.0..=pct_range.1);
        let len = ((pct * frames as f64).round() as usize).clamp(lo, hi);
        let start = rng.random_range(0..=frames - len);
        entries[i].occlusion.push(OcclusionSpan { start, len });
    }
    Ok(())
}
