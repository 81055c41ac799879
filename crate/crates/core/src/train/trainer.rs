use muse_autograd::Graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::schedule::{ScheduleAction, TrainState};
use super::TrainConfig;
use crate::data::corpus::{Batch, Example};
use crate::model::MuseNet;
use crate::objectives::total_loss_graph;
use crate::{invalid, MuseError, Result};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
    pub si_sdr_term: f64,
    pub ce_term: f64,
    /// Consecutive-increase counter after this epoch.
    pub counter: usize,
    pub steps: usize,
    pub action: ScheduleAction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    pub si_sdr: f64,
    pub ce: f64,
}

impl LossStats {
    fn accumulate(&mut self, other: LossStats, weight: f64) {
        self.total += weight * other.total;
        self.si_sdr += weight * other.si_sdr;
        self.ce += weight * other.ce;
    }
}

pub struct FitSummary {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub steps: usize,
}

pub struct Trainer {
    net: MuseNet,
    best: Option<MuseNet>,
    config: TrainConfig,
    gamma: f64,
    adam: Adam,
    pub state: TrainState,
    rng: ChaCha8Rng,
    train: Vec<Example>,
    val: Vec<Example>,
    steps: usize,
}

impl Trainer {
    pub fn new(net: MuseNet, config: TrainConfig, train: Vec<Example>, val: Vec<Example>) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return invalid("no training examples");
        }
        if let Some(heads) = net.heads() {
            if let Some(y) = train.iter().chain(&val).filter_map(|e| e.speaker).find(|&y| y >= heads.classes()) {
                return invalid(format!("speaker index {y} exceeds {} classes", heads.classes()));
            }
        }
        let gamma = net.config.variant.effective_gamma(config.gamma);
        Ok(Trainer {
            adam: Adam::new(config.initial_lr, config.beta1, config.beta2, config.eps),
            state: TrainState::new(config.initial_lr, config.lr_halving_patience, config.early_stop_patience),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            gamma,
            net,
            best: None,
            config,
            train,
            val,
            steps: 0,
        })
    }

    pub fn net(&self) -> &MuseNet {
        &self.net
    }

    /// Best-validation network, or the current one before any validation.
    pub fn best(&self) -> &MuseNet {
        self.best.as_ref().unwrap_or(&self.net)
    }

    pub fn into_best(self) -> MuseNet {
        self.best.unwrap_or(self.net)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn batch(&self, examples: &[Example]) -> Result<Batch> {
        let v = &self.net.config.visual;
        Batch::new(examples, v.frontend, v.image_size)
    }

    /// Loss of one batch; builds the CE term only when every item is labelled
    /// and the network has heads.
    fn losses(&self, g: &mut Graph, batch: &Batch) -> Result<(muse_autograd::Var, LossStats)> {
        let out = self.net.forward(g, &batch.input)?;
        let labels: Option<Vec<usize>> = batch.labels.iter().copied().collect();
        let logits = match (self.net.heads(), &labels) {
            (Some(heads), Some(_)) => Some(heads.logits(g, self.net.store(), &out.extraction.speaker_embeddings)?),
            _ => None,
        };
        let terms =
            total_loss_graph(g, out.estimate, &batch.targets, logits.as_deref().zip(labels.as_deref()), self.gamma)?;
        let stats = LossStats {
            total: g.value(terms.total).item(),
            si_sdr: g.value(terms.si_sdr).item(),
            ce: terms.ce.map_or(0.0, |c| g.value(c).item()),
        };
        Ok((terms.total, stats))
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, batch: &Batch, batch_id: usize) -> Result<LossStats> {
        let mut g = Graph::new(true);
        let (total, stats) = self.losses(&mut g, batch)?;
        if !stats.total.is_finite() {
            return Err(MuseError::NonFinite {
                epoch: self.state.epoch,
                batch: batch_id,
                si_sdr_term: stats.si_sdr,
                ce_term: stats.ce,
            });
        }
        let grads = g.backward(total)?;
        self.adam.lr = self.state.lr;
        self.adam.step(self.net.store_mut(), &grads);
        self.net.apply_buffer_updates(&mut g)?;
        self.steps += 1;
        Ok(stats)
    }

    fn step_budget_left(&self) -> bool {
        self.config.max_steps.is_none_or(|m| self.steps < m)
    }

    /// One pass over shuffled random crops of the training set.
    pub fn train_epoch(&mut self) -> Result<LossStats> {
        let crop = self.config.crop_frames();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut acc = LossStats::default();
        let mut seen = 0usize;
        for (batch_id, chunk) in order.chunks(self.config.batch_size).enumerate() {
            if !self.step_budget_left() {
                break;
            }
            let crops: Vec<Example> = chunk
                .iter()
                .map(|&i| {
                    let ex = &self.train[i];
                    let start = if ex.frames > crop { self.rng.random_range(0..=ex.frames - crop) } else { 0 };
                    ex.crop(start, crop)
                })
                .collect();
            let batch = self.batch(&crops)?;
            let stats = self.step(&batch, batch_id)?;
            acc.accumulate(stats, chunk.len() as f64);
            seen += chunk.len();
        }
        if seen > 0 {
            acc = LossStats {
                total: acc.total / seen as f64,
                si_sdr: acc.si_sdr / seen as f64,
                ce: acc.ce / seen as f64,
            };
        }
        Ok(acc)
    }

    /// Loss over the leading crop of every validation example, in inference mode.
    pub fn validate(&self) -> Result<LossStats> {
        let set = if self.val.is_empty() { &self.train } else { &self.val };
        let crop = self.config.crop_frames();
        let mut acc = LossStats::default();
        for chunk in set.chunks(self.config.batch_size) {
            let crops: Vec<Example> = chunk.iter().map(|e| e.crop(0, crop)).collect();
            let batch = self.batch(&crops)?;
            let mut g = Graph::inference();
            let (_, stats) = self.losses(&mut g, &batch)?;
            acc.accumulate(stats, chunk.len() as f64);
        }
        let n = set.len() as f64;
        Ok(LossStats { total: acc.total / n, si_sdr: acc.si_sdr / n, ce: acc.ce / n })
    }

    /// Trains until early stopping, `max_epochs` or the step budget; `on_epoch`
    /// sees each log line and whether the epoch set a new best.
    pub fn fit(&mut self, mut on_epoch: impl FnMut(&EpochLog, bool, &MuseNet) -> Result<()>) -> Result<FitSummary> {
        let mut log = Vec::new();
        let mut best_epoch = 0;
        for epoch in 0..self.config.max_epochs {
            let lr = self.state.lr;
            let train = self.train_epoch()?;
            let val = self.validate()?;
            if !val.total.is_finite() {
                return Err(MuseError::NonFinite { epoch, batch: 0, si_sdr_term: val.si_sdr, ce_term: val.ce });
            }
            let improved = val.total < self.state.best_val;
            let action = self.state.observe(val.total);
            if improved {
                best_epoch = epoch;
                self.best = Some(self.net.clone());
            }
            let line = EpochLog {
                epoch,
                train_loss: train.total,
                val_loss: val.total,
                lr,
                si_sdr_term: train.si_sdr,
                ce_term: train.ce,
                counter: self.state.counter,
                steps: self.steps,
                action,
            };
            on_epoch(&line, improved, self.best())?;
            log.push(line);
            if action == ScheduleAction::Stop || !self.step_budget_left() {
                break;
            }
        }
        Ok(FitSummary { log, best_epoch, best_val: self.state.best_val, steps: self.steps })
    }
}
