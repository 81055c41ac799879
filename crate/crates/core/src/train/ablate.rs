use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalReport};
use super::trainer::{FitSummary, Trainer};
use super::TrainConfig;
use crate::data::corpus::Example;
use crate::model::{ModelConfig, MuseNet, Variant};
use crate::{MuseError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Classification weight 0.1 against 0.
    Loss,
    /// Per-block speaker encoders against one shared encoder.
    Sharing,
    /// Number of extractor blocks, 1 to 4.
    Iterations,
    /// Full model against the model without speaker path.
    Baseline,
}

impl FromStr for Suite {
    type Err = MuseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(Suite::Loss),
            "sharing" => Ok(Suite::Sharing),
            "iterations" => Ok(Suite::Iterations),
            "baseline" => Ok(Suite::Baseline),
            _ => Err(MuseError::Invalid(format!("unknown ablation suite `{s}`"))),
        }
    }
}

/// One trained configuration within a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub label: String,
    pub variant: Variant,
    pub repeats: usize,
}

impl Suite {
    pub fn runs(self, base_repeats: usize) -> Vec<AblationRun> {
        let run = |label: &str, variant, repeats| AblationRun { label: label.to_string(), variant, repeats };
        match self {
            Suite::Loss => {
                vec![run("muse", Variant::Muse, base_repeats), run("muse-jt", Variant::MuseJt, base_repeats)]
            }
            Suite::Sharing => {
                vec![run("muse", Variant::Muse, base_repeats), run("muse-shared", Variant::MuseShared, base_repeats)]
            }
            Suite::Iterations => (1..=4).map(|r| run(&format!("muse-r{r}"), Variant::Muse, r)).collect(),
            Suite::Baseline => vec![
                run("muse", Variant::Muse, base_repeats),
                run("av-convtasnet", Variant::AvConvTasnet, base_repeats),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mean_si_sdri_db: f64,
    pub median_si_sdri_db: f64,
    pub params: usize,
}

/// Builds the network for one run from the base configuration.
pub fn run_config(base: &ModelConfig, run: &AblationRun) -> ModelConfig {
    let mut extractor = base.extractor.clone();
    extractor.repeats = run.repeats;
    ModelConfig::new(base.codec.clone(), base.visual.clone(), &extractor, run.variant, base.num_speakers, base.seed)
}

/// Trains every run of `suite` on the same data and seeds and evaluates
/// each best-validation network on `test`. `on_run` receives each trained
/// network with its fit summary and report.
pub fn ablate(
    suite: Suite,
    base: &ModelConfig,
    train_config: &TrainConfig,
    train: &[Example],
    val: &[Example],
    test: &[Example],
    mut on_run: impl FnMut(&AblationRun, &MuseNet, &FitSummary, &EvalReport) -> Result<()>,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for run in suite.runs(base.extractor.repeats) {
        let net = MuseNet::new(run_config(base, &run))?;
        let params = net.without_heads()?.param_count();
        let mut cfg = train_config.clone();
        cfg.variant = run.variant;
        let mut trainer = Trainer::new(net, cfg, train.to_vec(), val.to_vec())?;
        let summary = trainer.fit(|_, _, _| Ok(()))?;
        let best = trainer.into_best();
        let report = evaluate(&best, test, None)?;
        on_run(&run, &best, &summary, &report)?;
        rows.push(AblationRow {
            variant: run.label.clone(),
            mean_si_sdri_db: report.mean_si_sdri(),
            median_si_sdri_db: report.median_si_sdri(),
            params,
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,mean_si_sdri_db,params\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.4},{}", r.variant, r.mean_si_sdri_db, r.params);
    }
    out
}
