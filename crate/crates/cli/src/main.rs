use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use swarmguard::detector::Criterion;
use swarmguard::pipeline::{self, ErrorClass, EvaluateOptions, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "swarmguard", version, about = "Detect antagonistic robots in a Voronoi coverage swarm")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Filter {
    /// Only this criterion (naive, binomial or mean).
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Only this false-positive budget.
    #[arg(long)]
    fpr: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config,
    /// Simulate the training, validation, calibration and test runs.
    Generate,
    /// Fit the flow on the generated training features.
    Train {
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Set detector thresholds on the calibration runs.
    Calibrate {
        #[command(flatten)]
        filter: Filter,
    },
    /// Apply the calibrated detectors to the test runs and write the report.
    Evaluate {
        #[command(flatten)]
        filter: Filter,
        /// Also report detection rates after every step.
        #[arg(long)]
        per_timestep: bool,
        /// Keep only runs whose antagonist reached its ROI.
        #[arg(long)]
        success_filter: bool,
    },
    /// Generate, train, calibrate and evaluate in one go.
    All,
    /// Draw one step of a run with sampled and observed actions as SVG.
    Snapshot {
        /// Run file (JSON lines); defaults to the generated test set.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        step: usize,
        #[arg(long, default_value = "mean")]
        criterion: Criterion,
        #[arg(long, default_value_t = 0.05)]
        fpr: f64,
        /// Output SVG file.
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Io => 5,
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(cfg: &PipelineConfig, resume: bool) -> Result<(), PipelineError> {
    let log = pipeline::train(cfg, resume, &mut |e| {
        info!(
            "epoch {} train {:.3} val {:.3} lr {}",
            e.epoch, e.train_log_prob, e.val_log_prob, e.learning_rate
        )
    })?;
    info!(
        "best validation log-density {:.3} at epoch {} (standard normal {:.3})",
        log.best_val_log_prob, log.best_epoch, log.baseline_val_log_prob
    );
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, opts: &EvaluateOptions) -> Result<(), PipelineError> {
    let report = pipeline::evaluate_stage(cfg, opts)?;
    let csv = swarmguard::evaluation::metrics_csv(&report.rows).map_err(PipelineError::from)?;
    print!("{csv}");
    info!("report written to {}", cfg.paths().report.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("configuration serializes"));
        }
        Command::Generate => {
            let s = pipeline::generate(&cfg)?;
            info!("{s:?}");
        }
        Command::Train { resume } => train(&cfg, resume)?,
        Command::Calibrate { filter } => {
            pipeline::calibrate_stage(&cfg, filter.criterion, filter.fpr)?;
        }
        Command::Evaluate {
            filter,
            per_timestep,
            success_filter,
        } => {
            let opts = EvaluateOptions {
                criterion: filter.criterion,
                fpr: filter.fpr,
                per_timestep,
                success_filter,
            };
            evaluate(&cfg, &opts)?;
        }
        Command::All => {
            pipeline::generate(&cfg)?;
            train(&cfg, false)?;
            pipeline::calibrate_stage(&cfg, None, None)?;
            evaluate(&cfg, &EvaluateOptions::default())?;
        }
        Command::Snapshot {
            runs,
            episode,
            step,
            criterion,
            fpr,
            output,
        } => {
            let runs = runs.unwrap_or_else(|| cfg.paths().runs("test"));
            pipeline::snapshot_stage(&cfg, &runs, episode, step, criterion, fpr, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARMGUARD_LOG", "info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("{e}");
            return ExitCode::from(exit_code(ErrorClass::Config));
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
