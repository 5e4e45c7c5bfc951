use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actsparse_core::experiment::{load_run_model, run_pipeline, validate_config};
use actsparse_core::kernels::bench::{bench, BenchConfig};
use actsparse_core::predictor::{collect_pairs, evaluate_predictor, train_predictor, write_metrics_csv, PredictorConfig};
use actsparse_core::numerics::SeededRng;
use actsparse_core::trainer::{compare_methods, run, shift_threshold, SweepConfig, TrainConfig, TrainHistory};
use actsparse_core::{ActivationKind, Error};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "actsparse", version, about = "Activation-sparsity experiments on toy gated FFN models")]
struct Cli {
    /// Overrides the seed in the given config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for `bench`).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of logical CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method and save the model, history and a summary.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train several methods and tabulate final sparsity and validation loss.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
    },
    /// Sweep FATReLU thresholds on a saved ReLU-family model.
    SweepThreshold {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
    /// Activation predictors.
    #[command(subcommand)]
    Predictor(PredictorCommand),
    /// Time the sparse kernel steps against dense baselines.
    Bench(BenchArgs),
    /// Run the full pipeline from one config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a pipeline config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum PredictorCommand {
    /// Train and evaluate a predictor for one layer of a saved model.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long, default_value_t = 50_000)]
        pairs: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1024)]
    d_model: usize,
    #[arg(long, default_value_t = 4096)]
    d_ff: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.5,0.7,0.9,0.95")]
    sparsity: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// FATReLU threshold; plain ReLU when absent.
    #[arg(long)]
    threshold: Option<f64>,
}

/// Exit code 2 for bad input, 1 for anything that failed at run time.
fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(Error::Config(_) | Error::Parse { .. } | Error::UnsupportedActivation(_)) => 2,
        Some(Error::Stage { source, .. }) if matches!(**source, Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Train { config } => train(cli, config),
        Command::Compare { configs } => compare(cli, configs),
        Command::SweepThreshold {
            model,
            candidates,
            tolerance,
        } => sweep(cli, model, candidates, *tolerance),
        Command::Predictor(PredictorCommand::Train {
            model,
            layer,
            pairs,
            epochs,
            hidden_dim,
            tau,
        }) => {
            let cfg = PredictorConfig {
                hidden_dim: *hidden_dim,
                epochs: *epochs,
                tau: *tau,
                pairs: *pairs,
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            predictor(cli, model, *layer, &cfg)
        }
        Command::Bench(args) => bench_cmd(cli, args),
        Command::Pipeline { config } => {
            let manifest = run_pipeline(config, &cli.out, cli.seed)?;
            println!(
                "pipeline {} finished; {} artifacts in {}",
                manifest.experiment_id,
                manifest.artifacts.len(),
                cli.out.display()
            );
            Ok(0)
        }
        Command::Validate { config } => {
            let problems = validate_config(config)?;
            if problems.is_empty() {
                println!("{}: ok", config.display());
                Ok(0)
            } else {
                for p in &problems {
                    println!("{}: {p}", config.display());
                }
                Ok(2)
            }
        }
    }
}

fn load_train_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: TrainConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn train(cli: &Cli, config: &Path) -> Result<u8> {
    let cfg = load_train_config(config, cli.seed)?;
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")).into());
    }
    let outcome = run(&cfg)?;
    create_out(&cli.out)?;
    let activation = outcome.model.layers()[0].activation;
    outcome.model.save(
        &cli.out.join("model"),
        json!({"model": cfg.model, "task": cfg.task, "activation": activation, "method": outcome.history.method}),
    )?;
    TrainHistory::write_csv(&[&outcome.history], &cli.out.join("history.csv"))?;
    write_json(
        &cli.out.join("summary.json"),
        &json!({
            "method": outcome.history.method,
            "updates": outcome.history.updates,
            "sparsity": outcome.final_report.average,
            "per_layer": outcome.final_report.per_layer,
            "val_loss": outcome.final_val_loss,
            "threshold": outcome.sweep.as_ref().and_then(|s| s.chosen),
        }),
    )?;
    println!(
        "{}: sparsity {:.4}, val loss {:.6}",
        outcome.history.method, outcome.final_report.average, outcome.final_val_loss
    );
    Ok(0)
}

fn compare(cli: &Cli, paths: &[PathBuf]) -> Result<u8> {
    let configs = paths
        .iter()
        .map(|p| load_train_config(p, cli.seed))
        .collect::<Result<Vec<_>>>()?;
    for (p, c) in paths.iter().zip(&configs) {
        let problems = c.validate();
        if !problems.is_empty() {
            return Err(Error::Config(format!("{}: {}", p.display(), problems.join("; "))).into());
        }
    }
    let cmp = compare_methods(&configs, &[])?;
    create_out(&cli.out)?;
    cmp.write_csv(&cli.out.join("comparison.csv"))?;
    let histories: Vec<&TrainHistory> = cmp.outcomes.iter().map(|o| &o.history).collect();
    TrainHistory::write_csv(&histories, &cli.out.join("history.csv"))?;
    for r in &cmp.rows {
        println!("{:<32} sparsity {:.4}  val loss {:.6}", r.method, r.sparsity, r.val_loss);
    }
    Ok(0)
}

fn sweep(cli: &Cli, model_dir: &Path, candidates: &[f64], tolerance: f64) -> Result<u8> {
    let (model, task) = load_run_model(model_dir)?;
    let sweep_cfg = SweepConfig {
        candidates: candidates.to_vec(),
        tolerance,
    };
    let (_, result) = shift_threshold(&model, &task, &sweep_cfg).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    })?;
    create_out(&cli.out)?;
    let path = cli.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["threshold", "sparsity", "val_loss", "chosen"])?;
    w.write_record([
        "0".to_string(),
        result.baseline_sparsity.to_string(),
        result.baseline_loss.to_string(),
        result.chosen.is_none().to_string(),
    ])?;
    for p in &result.points {
        w.write_record([
            p.threshold.to_string(),
            p.sparsity.to_string(),
            p.val_loss.to_string(),
            (result.chosen == Some(p.threshold)).to_string(),
        ])?;
    }
    w.flush()?;
    match result.chosen {
        Some(t) => println!("chosen threshold {t}"),
        None => println!("no candidate within tolerance; keeping ReLU"),
    }
    Ok(0)
}

fn predictor(cli: &Cli, model_dir: &Path, layer: usize, cfg: &PredictorConfig) -> Result<u8> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")).into());
    }
    let (model, task) = load_run_model(model_dir)?;
    if layer >= model.num_layers() {
        return Err(Error::Config(format!("--layer {layer} out of range for a {}-layer model", model.num_layers())).into());
    }
    let corpus = task
        .input
        .sample(model.d_model(), cfg.pairs, &mut SeededRng::new(cfg.seed).fork(7));
    let ds = collect_pairs(&model, &corpus, layer, cfg.pairs, cfg.seed)?;
    let (p, log) = train_predictor(&ds, cfg)?;
    for e in &log {
        info!("epoch {}: recall {:.4} predicted sparsity {:.4}", e.epoch, e.recall, e.predicted_sparsity);
    }
    let metrics = evaluate_predictor(&p, &ds)?;
    create_out(&cli.out)?;
    write_metrics_csv(&cli.out.join("predictor_metrics.csv"), std::slice::from_ref(&metrics))?;
    println!(
        "layer {}: recall {:.4}, predicted sparsity {:.4} over {} eval pairs",
        metrics.layer, metrics.recall, metrics.predicted_sparsity, metrics.eval_pairs
    );
    Ok(0)
}

fn bench_cmd(cli: &Cli, args: &BenchArgs) -> Result<u8> {
    let activation = match args.threshold {
        Some(t) => ActivationKind::fatrelu(t).map_err(|e| Error::Config(e.to_string()))?,
        None => ActivationKind::Relu,
    };
    let cfg = BenchConfig {
        d_model: args.d_model,
        d_ff: args.d_ff,
        sparsity: args.sparsity.clone(),
        trials: args.trials,
        warmup: args.warmup,
        seed: cli.seed.unwrap_or(0),
        activation,
    };
    let table = bench(&cfg)?;
    let path = if cli.out.extension().is_some_and(|e| e == "csv") {
        if let Some(parent) = cli.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_out(parent)?;
        }
        cli.out.clone()
    } else {
        create_out(&cli.out)?;
        cli.out.join("bench.csv")
    };
    table.write_csv(&path)?;
    for r in &table.rows {
        println!(
            "{:<12} sparsity {:.2}  median {:>9.2} us  speedup {:.2}x",
            r.step, r.sparsity, r.median_us, r.speedup_vs_dense
        );
    }
    Ok(0)
}
