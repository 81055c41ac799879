use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use muse_core::checkpoint::{self, CheckpointMeta};
use muse_core::config::RunConfig;
use muse_core::data::corpus::Corpus;
use muse_core::data::manifest::Split;
use muse_core::data::{build_dataset, MANIFEST_FILE};
use muse_core::train::ablate::{ablate, to_csv, Suite};
use muse_core::train::evaluate::{evaluate, PesqHook};
use muse_core::train::trainer::Trainer;
use muse_core::{MuseError, MuseNet, Result, Variant};

#[derive(Parser)]
#[command(name = "muse", version, about = "Audio-visual target speaker extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic audio-visual corpus and its mixture manifest.
    SynthData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Speaker counts per mixture, e.g. `2,3`.
        #[arg(long, value_delimiter = ',')]
        mixtures: Option<Vec<usize>>,
    },
    /// Train a model; prints the best checkpoint path.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Train and compare the variants of one ablation suite.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        suite: Suite,
        /// Existing corpus; synthesised into the run directory when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarise a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Creates `<runs_dir>/<hash prefix>-<unix seconds>` and stores the resolved
/// configuration in it.
fn run_dir(config: &RunConfig, tag: &str) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let hash = config.hash();
    let mut dir = config.paths.runs_dir.join(format!("{}-{secs}-{tag}", &hash[..12]));
    let mut n = 1;
    while dir.exists() {
        dir = config.paths.runs_dir.join(format!("{}-{secs}-{tag}-{n}", &hash[..12]));
        n += 1;
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    fs::write(dir.join("config.sha256"), format!("{hash}\n"))?;
    Ok(dir)
}

fn synth_data(config: Option<&Path>, seed: Option<u64>, out: &Path, mixtures: Option<Vec<usize>>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.dataset.seed = seed;
    }
    if let Some(m) = mixtures {
        cfg.dataset.speakers_per_mixture = m;
    }
    cfg.validate()?;
    let info = build_dataset(&cfg.dataset, out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    println!("manifest: {}", out.join(MANIFEST_FILE).display());
    println!("speakers (C): {}", info.num_speakers);
    Ok(())
}

fn train(config: Option<&Path>, manifest: &Path, variant: Option<Variant>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(v) = variant {
        cfg.train.variant = v;
    }
    if let Some(seed) = seed {
        cfg.train.seed = seed;
        cfg.model.seed = seed;
    }
    cfg.validate()?;
    let corpus = Corpus::open(manifest)?;
    if corpus.feature_dim() != cfg.model.visual.envelope_dim {
        return Err(MuseError::Config(format!(
            "corpus has {} visual features, model expects {}",
            corpus.feature_dim(),
            cfg.model.visual.envelope_dim
        )));
    }
    let dir = run_dir(&cfg, cfg.train.variant.as_str())?;
    let hash = cfg.hash();
    let net = MuseNet::new(cfg.model_config(cfg.train.variant, corpus.num_speakers()))?;
    let mut trainer =
        Trainer::new(net, cfg.train.clone(), corpus.examples(Split::Train)?, corpus.examples(Split::Val)?)?;
    let ckpt = dir.join("best.ckpt");
    let mut log = fs::File::create(dir.join("train.jsonl"))?;
    let mut line_buf = Vec::new();
    trainer.fit(|line, improved, best| {
        line_buf.clear();
        serde_json::to_writer(&mut line_buf, line)?;
        let mut record: serde_json::Value = serde_json::from_slice(&line_buf)?;
        record["config_hash"] = serde_json::Value::String(hash.clone());
        let text = record.to_string();
        println!("{text}");
        writeln!(log, "{text}")?;
        if improved {
            let meta = CheckpointMeta { config_hash: hash.clone(), epoch: line.epoch, val_loss: Some(line.val_loss) };
            checkpoint::save(&ckpt, best, &meta)?;
        }
        Ok(())
    })?;
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn eval(checkpoint_path: &Path, manifest: &Path, split: Split) -> Result<()> {
    let (net, meta) = checkpoint::load(checkpoint_path)?;
    let corpus = Corpus::open(manifest)?;
    let examples = corpus.examples(split)?;
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let pesq = PesqHook::from_env(&dir.join("pesq-scratch"));
    let report = evaluate(&net, &examples, pesq.as_ref())?;
    let out = dir.join(format!("eval-{}.jsonl", split.as_str()));
    report.write(&out)?;
    println!("config hash: {}", meta.config_hash);
    println!("items: {}", report.records.len());
    println!("mean SI-SDRi: {:.3} dB", report.mean_si_sdri());
    if let Some(p) = report.mean_pesq() {
        println!("mean PESQ: {p:.3}");
    }
    println!("report: {}", out.display());
    Ok(())
}

fn run_ablation(config: Option<&Path>, suite: Suite, manifest: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
        cfg.model.seed = seed;
        cfg.dataset.seed = seed;
    }
    cfg.validate()?;
    let dir = run_dir(&cfg, "ablate")?;
    let manifest = match manifest {
        Some(m) => m.to_path_buf(),
        None => {
            build_dataset(&cfg.dataset, &dir.join("data"))?;
            dir.join("data").join(MANIFEST_FILE)
        }
    };
    let corpus = Corpus::open(&manifest)?;
    let base = cfg.model_config(Variant::Muse, corpus.num_speakers());
    let (train, val, test) =
        (corpus.examples(Split::Train)?, corpus.examples(Split::Val)?, corpus.examples(Split::Test)?);
    let hash = cfg.hash();
    let rows = ablate(suite, &base, &cfg.train, &train, &val, &test, |run, net, summary, report| {
        let meta =
            CheckpointMeta { config_hash: hash.clone(), epoch: summary.best_epoch, val_loss: Some(summary.best_val) };
        checkpoint::save(&dir.join(format!("{}.ckpt", run.label)), net, &meta)?;
        report.write(&dir.join(format!("{}.eval.jsonl", run.label)))?;
        eprintln!("{}: mean SI-SDRi {:.3} dB after {} epochs", run.label, report.mean_si_sdri(), summary.log.len());
        Ok(())
    })?;
    let csv = to_csv(&rows);
    let out = dir.join("ablation.csv");
    fs::write(&out, &csv)?;
    print!("{csv}");
    println!("table: {}", out.display());
    Ok(())
}

fn inspect(checkpoint_path: &Path) -> Result<()> {
    let (net, meta) = checkpoint::load(checkpoint_path)?;
    println!("variant: {}", net.config.variant);
    println!("config hash: {}", meta.config_hash);
    println!("epoch: {}", meta.epoch);
    if let Some(v) = meta.val_loss {
        println!("val loss: {v:.4}");
    }
    println!("codec: {}", serde_json::to_string(&net.config.codec)?);
    println!("extractor: {}", serde_json::to_string(&net.config.extractor)?);
    println!("visual: {}", serde_json::to_string(&net.config.visual)?);
    println!("parameters by module:");
    for (module, count) in net.param_counts_by_module() {
        println!("  {module:<22} {count}");
    }
    println!("total: {} ({} trainable)", net.param_count(), net.trainable_count());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthData { config, seed, out, mixtures } => synth_data(config.as_deref(), seed, &out, mixtures),
        Command::Train { config, manifest, variant, seed } => train(config.as_deref(), &manifest, variant, seed),
        Command::Eval { checkpoint, manifest, split } => eval(&checkpoint, &manifest, split),
        Command::Ablate { config, suite, manifest, seed } => {
            run_ablation(config.as_deref(), suite, manifest.as_deref(), seed)
        }
        Command::Inspect { checkpoint } => inspect(&checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
