mod common;

use common::{random_examples, tiny_config};
use muse_core::audio_codec::CodecParams;
use muse_core::data::corpus::Corpus;
use muse_core::data::manifest::Split;
use muse_core::data::{build_dataset, DatasetConfig, MANIFEST_FILE};
use muse_core::train::ablate::{run_config, Suite};
use muse_core::train::evaluate::{evaluate, evaluate_with, IdentityModel};
use muse_core::train::schedule::{ScheduleAction, TrainState};
use muse_core::train::trainer::Trainer;
use muse_core::train::TrainConfig;
use muse_core::{MuseNet, Variant};

fn corpus() -> (tempfile::TempDir, Corpus) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        train_speakers: 3,
        test_speakers: 2,
        train_mixtures: 4,
        val_mixtures: 2,
        test_mixtures: 5,
        utterances_per_speaker: 3,
        val_utterances_per_speaker: 1,
        ..Default::default()
    };
    build_dataset(&cfg, dir.path()).unwrap();
    let c = Corpus::open(&dir.path().join(MANIFEST_FILE)).unwrap();
    (dir, c)
}

#[test]
fn identity_model_scores_zero_improvement() {
    let (_dir, corpus) = corpus();
    let test = corpus.examples(Split::Test).unwrap();
    let identity = IdentityModel::new(CodecParams::default()).unwrap();
    let report = evaluate_with(&test, None, |ex| identity.estimate(&ex.mixture)).unwrap();
    assert_eq!(report.records.len(), 5);
    assert!(report.mean_si_sdri().abs() < 0.05, "{}", report.mean_si_sdri());
}

#[test]
fn evaluation_is_reproducible_and_complete() {
    let (_dir, corpus) = corpus();
    let test = corpus.examples(Split::Test).unwrap();
    let net = MuseNet::new(tiny_config(Variant::Muse, corpus.num_speakers())).unwrap();
    let a = evaluate(&net, &test, None).unwrap();
    let b = evaluate(&net, &test, None).unwrap();
    assert_eq!(a.records.len(), test.len());
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(net.heads().unwrap().evaluations(), 0);
    let line = String::from_utf8(a.to_jsonl().unwrap()).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    for key in ["utterance_id", "si_sdr_est", "si_sdr_mix", "si_sdri"] {
        assert!(first.get(key).is_some());
    }
    assert!(first.get("pesq").is_none());
}

#[test]
fn estimate_length_mismatch_is_rejected() {
    let (_dir, corpus) = corpus();
    let test = corpus.examples(Split::Test).unwrap();
    assert!(evaluate_with(&test, None, |ex| Ok(ex.mixture[1..].to_vec())).is_err());
}

#[test]
fn identical_seeds_give_identical_first_epoch() {
    let ex = random_examples(4, 2, 3, 1);
    let cfg = TrainConfig { batch_size: 2, crop_s: 0.04, max_epochs: 1, ..Default::default() };
    let run = || {
        let net = MuseNet::new(tiny_config(Variant::Muse, 3)).unwrap();
        let mut tr = Trainer::new(net, cfg.clone(), ex.clone(), ex.clone()).unwrap();
        let summary = tr.fit(|_, _, _| Ok(())).unwrap();
        (summary.log[0].train_loss, summary.log[0].val_loss)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}

#[test]
fn fabricated_increases_halve_then_stop() {
    let mut s = TrainState::new(1e-3, 3, 5);
    let actions: Vec<_> = [2.0, 2.1, 2.2, 2.3].iter().map(|&v| s.observe(v)).collect();
    assert_eq!(actions.last(), Some(&ScheduleAction::HalveLr));
    assert_eq!(s.lr, 5e-4);
    s.observe(2.4);
    assert_eq!(s.observe(2.5), ScheduleAction::Stop);
}

#[test]
fn log_records_the_schedule() {
    let ex = random_examples(2, 2, 2, 2);
    let net = MuseNet::new(tiny_config(Variant::Muse, 2)).unwrap();
    let cfg = TrainConfig { batch_size: 2, crop_s: 0.04, max_epochs: 3, ..Default::default() };
    let mut tr = Trainer::new(net, cfg, ex.clone(), ex).unwrap();
    let mut seen = Vec::new();
    let summary = tr
        .fit(|l, _, _| {
            seen.push(l.clone());
            Ok(())
        })
        .unwrap();
    assert_eq!(seen, summary.log);
    assert_eq!(seen.len(), 3);
    for (i, l) in seen.iter().enumerate() {
        assert_eq!(l.epoch, i);
        assert_eq!(l.lr, 1e-3);
        assert!(l.train_loss.is_finite() && l.val_loss.is_finite());
        let json = serde_json::to_value(l).unwrap();
        for key in ["epoch", "train_loss", "val_loss", "lr", "si_sdr_term", "ce_term", "counter"] {
            assert!(json.get(key).is_some());
        }
    }
}

#[test]
fn ablation_runs_follow_the_suite() {
    let base = tiny_config(Variant::Muse, 3);
    let runs = Suite::Iterations.runs(2);
    assert_eq!(runs.iter().map(|r| r.repeats).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    for run in Suite::Sharing.runs(2) {
        let cfg = run_config(&base, &run);
        assert_eq!(cfg.extractor.share_speaker_encoders, run.variant == Variant::MuseShared);
    }
    let shared = MuseNet::new(run_config(&base, &Suite::Sharing.runs(2)[1])).unwrap();
    let full = MuseNet::new(run_config(&base, &Suite::Sharing.runs(2)[0])).unwrap();
    assert!(shared.param_count() < full.param_count());
    let baseline = MuseNet::new(run_config(&base, &Suite::Baseline.runs(2)[1])).unwrap();
    assert!(baseline.heads().is_none());
}
