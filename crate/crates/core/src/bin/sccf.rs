use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use sccf::checkpoint;
use sccf::data::{load_with_ids, split_per_user, IdMap, SplitDataset, SplitRatios};
use sccf::eval::{evaluate, EvalReport, EvalTarget};
use sccf::experiments::{recipe, train_and_test, Ablation, RunReport};
use sccf::train::{build_encoder, tune_learning_rate, EpochRecord, GridPoint, LEARNING_RATE_GRID};
use sccf::verify::{run_suite, VerifyOptions};
use sccf::{Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "sccf", version, about = "Contrastive collaborative filtering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a `user item` log per user and write the manifest and id maps.
    Prepare {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        split_seed: u64,
        /// train,validation,test fractions
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
    },
    /// Train a model; any config key may follow as `--key value`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pick the learning rate from the fixed grid by validation Recall@20.
        #[arg(long)]
        tune_lr: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Score a saved checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `test` or `validation`
        #[arg(long, default_value = "test")]
        target: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run the spectral self-check suite; exits non-zero if a check fails.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        signals: usize,
        #[arg(long, default_value_t = 5)]
        random_graphs: usize,
        /// Also write the records to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation grid (similarity, squared_term, temperature, layers,
    /// encoders, or all).
    Ablate {
        which: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn resolve_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(cfg: &ExperimentConfig) -> Result<SplitDataset> {
    if let Some(manifest) = &cfg.manifest {
        return SplitDataset::load_manifest(manifest);
    }
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("set `dataset` or `manifest`".into()))?;
    let (ds, _) = load_with_ids(dataset)?;
    split_per_user(&ds, SplitRatios::default(), cfg.split_seed)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Echoes every event on stdout and appends it to `metrics.jsonl`.
struct MetricsLog {
    path: PathBuf,
    file: BufWriter<File>,
}

impl MetricsLog {
    fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("metrics.jsonl");
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(Self {
            path,
            file: BufWriter::new(file),
        })
    }

    fn emit(&mut self, event: &impl Serialize) -> Result<()> {
        let line = serde_json::to_string(event)?;
        println!("{line}");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))
    }
}

#[derive(Serialize)]
struct EpochEvent<'a> {
    event: &'static str,
    run: &'a str,
    epoch: usize,
    mean_loss: f64,
    seconds: f64,
    #[serde(flatten)]
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct FinalEvent<'a> {
    event: &'static str,
    run: &'a str,
    #[serde(flatten)]
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a ExperimentConfig,
    learning_rate_grid: Option<&'a [GridPoint]>,
    run: &'a RunReport,
    epochs_run: usize,
}

fn run_one(label: &str, cfg: &ExperimentConfig, split: &SplitDataset, dir: &Path) -> Result<RunReport> {
    create_dir(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text()).map_err(|e| io_err(dir, e))?;
    let mut log = MetricsLog::open(dir)?;
    let mut log_err = None;
    let (outcome, report) = train_and_test(label, cfg, split, |rec: &EpochRecord| {
        if let Some(v) = &rec.validation {
            let event = EpochEvent {
                event: "validation",
                run: label,
                epoch: rec.epoch,
                mean_loss: rec.mean_loss,
                seconds: rec.seconds,
                report: v,
            };
            if let Err(e) = log.emit(&event) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.emit(&FinalEvent {
        event: "test",
        run: label,
        report: &report.test,
    })?;
    checkpoint::save(dir.join("embeddings.bin"), outcome.embeddings.view())?;
    Ok(report)
}

fn cmd_prepare(dataset: &Path, out: &Path, split_seed: u64, ratios: &str) -> Result<()> {
    let parts: Vec<f64> = ratios
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad ratio {s:?}"))))
        .collect::<Result<_>>()?;
    let [train, validation, test] = parts[..] else {
        return Err(Error::Config(format!("expected three ratios, got {ratios:?}")));
    };
    let ratios = SplitRatios {
        train,
        validation,
        test,
    };
    let (ds, ids) = load_with_ids(dataset)?;
    let split = split_per_user(&ds, ratios, split_seed)?;
    create_dir(out)?;
    split.save_manifest(out.join("split.manifest"))?;
    for (name, list) in [("user_ids.txt", &ids.users), ("item_ids.txt", &ids.items)] {
        let path = out.join(name);
        fs::write(&path, IdMap::to_lines(list)).map_err(|e| io_err(&path, e))?;
    }
    let summary = serde_json::json!({
        "event": "prepare",
        "n_users": split.n_users(),
        "n_items": split.n_items(),
        "train": split.train.n_interactions(),
        "validation": split.validation.len(),
        "test": split.test.len(),
        "split_seed": split_seed,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_train(config: Option<&Path>, tune_lr: bool, overrides: &[String]) -> Result<()> {
    let mut cfg = resolve_config(config, overrides)?;
    let split = load_split(&cfg)?;
    let grid = if tune_lr {
        let (best, points) = tune_learning_rate(&cfg, &split, &LEARNING_RATE_GRID)?;
        cfg.learning_rate = best;
        Some(points)
    } else {
        None
    };
    let dir = cfg.out_dir.clone();
    let report = run_one("train", &cfg, &split, &dir)?;
    let epochs_run = cfg.epochs;
    write_json(
        &dir.join("report.json"),
        &TrainReport {
            config: &cfg,
            learning_rate_grid: grid.as_deref(),
            run: &report,
            epochs_run,
        },
    )
}

fn cmd_evaluate(checkpoint_path: &Path, config: Option<&Path>, target: &str, overrides: &[String]) -> Result<()> {
    let cfg = resolve_config(config, overrides)?;
    let target = match target {
        "test" => EvalTarget::Test,
        "validation" | "valid" => EvalTarget::Validation,
        other => return Err(Error::Config(format!("unknown target {other:?}"))),
    };
    let split = load_split(&cfg)?;
    let table = checkpoint::load(checkpoint_path)?;
    let encoder = build_encoder(&cfg, &split)?;
    let inferred = encoder.inference(table.view())?;
    let report = evaluate(inferred.view(), &split, target, &cfg.eval_ks, cfg.infer_similarity)?;
    create_dir(&cfg.out_dir)?;
    MetricsLog::open(&cfg.out_dir)?.emit(&FinalEvent {
        event: "evaluate",
        run: &checkpoint_path.display().to_string(),
        report: &report,
    })
}

fn cmd_verify(opts: VerifyOptions, out: Option<&Path>) -> Result<bool> {
    let records = run_suite(&opts)?;
    let mut lines = String::new();
    for r in &records {
        let line = serde_json::to_string(r)?;
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    }
    if let Some(path) = out {
        fs::write(path, lines).map_err(|e| io_err(path, e))?;
    }
    Ok(records.iter().all(|r| r.pass))
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_ablate(which: &str, config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let base = resolve_config(config, overrides)?;
    let split = load_split(&base)?;
    let ablations: Vec<Ablation> = if which == "all" {
        Ablation::ALL.to_vec()
    } else {
        vec![which.parse()?]
    };
    for ablation in ablations {
        let root = base.out_dir.join(ablation.to_string());
        let mut reports = Vec::new();
        for arm in recipe(ablation, &base) {
            let mut cfg = arm.config;
            cfg.out_dir = root.join(slug(&arm.label));
            reports.push(run_one(&arm.label, &cfg, &split, &cfg.out_dir)?);
        }
        write_json(
            &root.join("report.json"),
            &serde_json::json!({
                "ablation": ablation,
                "runs": reports,
            }),
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare {
            dataset,
            out,
            split_seed,
            ratios,
        } => cmd_prepare(&dataset, &out, split_seed, &ratios),
        Command::Train {
            config,
            tune_lr,
            overrides,
        } => cmd_train(config.as_deref(), tune_lr, &overrides),
        Command::Evaluate {
            checkpoint,
            config,
            target,
            overrides,
        } => cmd_evaluate(&checkpoint, config.as_deref(), &target, &overrides),
        Command::Verify {
            seed,
            signals,
            random_graphs,
            out,
        } => {
            let opts = VerifyOptions {
                seed,
                signals,
                random_graphs,
                ..VerifyOptions::default()
            };
            match cmd_verify(opts, out.as_deref()) {
                Ok(true) => Ok(()),
                Ok(false) => {
                    eprintln!("sccf: at least one check failed");
                    return ExitCode::from(2);
                }
                Err(e) => Err(e),
            }
        }
        Command::Ablate {
            which,
            config,
            overrides,
        } => cmd_ablate(&which, config.as_deref(), &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sccf: {e}");
            ExitCode::FAILURE
        }
    }
}
