//! Training objectives and evaluation metrics.
//!
//! The training loss is `L = L_SI-SDR + gamma * L_CE`, where the speaker
//! classification term sums the cross-entropy of every extractor block's
//! speaker vector through its own bias-free head.

use std::sync::atomic::{AtomicUsize, Ordering};

use muse_autograd::ops::si_sdr_db;
use muse_autograd::{Graph, ParamId, ParamStore, Tensor, Var};

use crate::nn::ParamBuilder;
use crate::{invalid, MuseError, Result};

pub use muse_autograd::ops::SI_SDR_CAP_DB;

/// Weight of the speaker classification term.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Class index of a training speaker, `0 <= y < C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpeakerLabel(usize);

impl SpeakerLabel {
    pub fn new(y: usize, classes: usize) -> Result<Self> {
        if y >= classes {
            return invalid(format!("speaker label {y} out of range for {classes} classes"));
        }
        Ok(SpeakerLabel(y))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// SI-SDR in dB, capped at `+60`.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(si_sdr_db(est, reference)?)
}

pub fn si_sdr_loss(est: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(-si_sdr(est, reference)?)
}

/// Improvement of the estimate over the unprocessed mixture.
pub fn si_sdri(est: &[f64], reference: &[f64], mixture: &[f64]) -> Result<f64> {
    Ok(si_sdr(est, reference)? - si_sdr(mixture, reference)?)
}

/// Sum over blocks of `-log softmax(W^r A^r)[y]`.
pub fn ce_loss(embeddings: &[Vec<f64>], heads: &[Tensor], y: usize) -> Result<f64> {
    if embeddings.len() != heads.len() {
        return invalid(format!("{} embeddings for {} heads", embeddings.len(), heads.len()));
    }
    let mut total = 0.0;
    for (a, w) in embeddings.iter().zip(heads) {
        let (classes, dim) = w.dims2()?;
        if a.len() != dim {
            return invalid(format!("embedding of size {} for head [{classes}, {dim}]", a.len()));
        }
        SpeakerLabel::new(y, classes)?;
        let logits: Vec<f64> = w.data().chunks(dim).map(|row| row.iter().zip(a).map(|(p, q)| p * q).sum()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    Ok(total)
}

pub fn total_loss(
    est: &[f64],
    reference: &[f64],
    embeddings: &[Vec<f64>],
    heads: &[Tensor],
    y: usize,
    gamma: f64,
) -> Result<f64> {
    let sdr = si_sdr_loss(est, reference)?;
    if gamma == 0.0 {
        return Ok(sdr);
    }
    Ok(sdr + gamma * ce_loss(embeddings, heads, y)?)
}

/// One bias-free `C x dim` classification layer per extractor block.
///
/// Only used by the training objective; the counter records how many times
/// the heads were evaluated.
#[derive(Debug)]
pub struct ClassifierHeads {
    weights: Vec<ParamId>,
    classes: usize,
    evaluations: AtomicUsize,
}

impl Clone for ClassifierHeads {
    fn clone(&self) -> Self {
        ClassifierHeads {
            weights: self.weights.clone(),
            classes: self.classes,
            evaluations: AtomicUsize::new(self.evaluations()),
        }
    }
}

impl ClassifierHeads {
    pub const PREFIX: &'static str = "heads.";

    pub fn new(pb: &mut ParamBuilder, repeats: usize, classes: usize, dim: usize) -> Result<Self> {
        if classes == 0 {
            return invalid("classifier heads need at least one class");
        }
        pb.scoped("heads", |pb| {
            let weights =
                (0..repeats).map(|r| pb.uniform(&format!("w{r}"), &[classes, dim], dim)).collect::<Result<_>>()?;
            Ok(ClassifierHeads { weights, classes, evaluations: AtomicUsize::new(0) })
        })
    }

    /// Rebinds heads to existing parameters (e.g. after loading a checkpoint).
    pub fn from_store(store: &ParamStore, repeats: usize) -> Result<Option<Self>> {
        let mut weights = Vec::with_capacity(repeats);
        for r in 0..repeats {
            match store.lookup(&format!("heads.w{r}")) {
                Some(id) => weights.push(id),
                None if r == 0 => return Ok(None),
                None => return Err(MuseError::Checkpoint(format!("missing classifier head {r}"))),
            }
        }
        let classes = weights.first().map(|&w| store.get(w).shape()[0]).unwrap_or(0);
        Ok(Some(ClassifierHeads { weights, classes, evaluations: AtomicUsize::new(0) }))
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[ParamId] {
        &self.weights
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Logits `[B, C]` for each block's speaker vector.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, embeddings: &[Var]) -> Result<Vec<Var>> {
        if embeddings.len() != self.weights.len() {
            return invalid(format!("{} speaker embeddings for {} heads", embeddings.len(), self.weights.len()));
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        embeddings
            .iter()
            .zip(&self.weights)
            .map(|(&a, &w)| {
                let w = g.param(store, w);
                Ok(g.linear(a, w)?)
            })
            .collect()
    }
}

/// Batch-mean of `-SI-SDR` as a graph scalar.
pub fn si_sdr_loss_term(g: &mut Graph, est: Var, reference: &Tensor) -> Result<Var> {
    let v = g.si_sdr(est, reference)?;
    let m = g.mean(v);
    Ok(g.scale(m, -1.0))
}

/// Batch-mean of the per-item sum over blocks of cross-entropy.
pub fn ce_loss_term(g: &mut Graph, logits: &[Var], labels: &[usize]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &z in logits {
        let ce = g.cross_entropy(z, labels)?;
        total = Some(match total {
            Some(t) => g.add(t, ce)?,
            None => ce,
        });
    }
    let total = total.ok_or_else(|| MuseError::Invalid("no speaker embeddings for the CE term".into()))?;
    Ok(g.mean(total))
}

pub struct LossTerms {
    pub total: Var,
    pub si_sdr: Var,
    pub ce: Option<Var>,
}

/// `si_sdr_term + gamma * ce_term`; the CE term is only built when logits
/// are supplied and only joins the total when `gamma` is nonzero.
pub fn total_loss_graph(
    g: &mut Graph,
    est: Var,
    reference: &Tensor,
    logits: Option<(&[Var], &[usize])>,
    gamma: f64,
) -> Result<LossTerms> {
    let si = si_sdr_loss_term(g, est, reference)?;
    let Some((logits, labels)) = logits else {
        return Ok(LossTerms { total: si, si_sdr: si, ce: None });
    };
    let ce = ce_loss_term(g, logits, labels)?;
    if gamma == 0.0 {
        return Ok(LossTerms { total: si, si_sdr: si, ce: Some(ce) });
    }
    let weighted = g.scale(ce, gamma);
    let total = g.add(si, weighted)?;
    Ok(LossTerms { total, si_sdr: si, ce: Some(ce) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_range() {
        assert!(SpeakerLabel::new(9, 10).is_ok());
        assert!(SpeakerLabel::new(10, 10).is_err());
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let heads = vec![Tensor::zeros(&[3, 2])];
        assert!(ce_loss(&[vec![0.0, 1.0]], &heads, 3).is_err());
    }

    #[test]
    fn uniform_heads_give_ln_c_per_block() {
        let heads = vec![Tensor::zeros(&[10, 4]); 4];
        let emb = vec![vec![0.3, -0.2, 1.0, 0.5]; 4];
        let v = ce_loss(&emb, &heads, 3).unwrap();
        assert!((v - 4.0 * 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn si_sdri_of_mixture_is_zero() {
        let r = [1.0, 0.2, -0.4, 0.9];
        let m = [1.2, 0.0, -0.1, 0.3];
        assert_eq!(si_sdri(&m, &r, &m).unwrap(), 0.0);
    }
}
