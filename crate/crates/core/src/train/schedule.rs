use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleAction {
    Continue,
    HalveLr,
    Stop,
}

/// Validation-driven learning-rate state. The counter counts consecutive
/// epochs whose validation loss exceeded the previous epoch's.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub best_val: f64,
    pub prev_val: Option<f64>,
    pub counter: usize,
    pub halving_patience: usize,
    pub stop_patience: usize,
}

impl TrainState {
    pub fn new(lr: f64, halving_patience: usize, stop_patience: usize) -> Self {
        TrainState {
            epoch: 0,
            lr,
            best_val: f64::INFINITY,
            prev_val: None,
            counter: 0,
            halving_patience,
            stop_patience,
        }
    }

    /// Records one epoch's validation loss and advances the epoch.
    pub fn observe(&mut self, val: f64) -> ScheduleAction {
        if self.prev_val.is_some_and(|p| val > p) {
            self.counter += 1;
        } else {
            self.counter = 0;
        }
        self.prev_val = Some(val);
        self.best_val = self.best_val.min(val);
        self.epoch += 1;
        if self.counter >= self.stop_patience {
            ScheduleAction::Stop
        } else if self.counter == self.halving_patience {
            self.lr *= 0.5;
            ScheduleAction::HalveLr
        } else {
            ScheduleAction::Continue
        }
    }
}
