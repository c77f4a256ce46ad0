use std::path::PathBuf;
use std::process::ExitCode;

use cascade::commands;
use cascade::config::{RunConfig, Stage1Objective, Stage2Objective, SynthSettings, UsageError};
use cascade_core::SplitRatios;
use clap::{Args, Parser, Subcommand};

/// Two-stage cascaded ensemble: splits, threshold calibration, evaluation
/// reports, cross-fold prediction and synthetic panels.
///
/// Exit status: 0 success, 1 data or coverage error, 2 usage error.
/// Log level comes from CASCADE_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "cascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stratified train/val/test assignment per fold -> splits.csv
    Split(SplitArgs),
    /// Per-fold, per-stage validation thresholds -> thresholds.json
    Calibrate(CalibrateArgs),
    /// Per-fold test metrics for every model and the ensemble -> report.json, report.csv
    Evaluate(EvaluateArgs),
    /// Cross-fold majority vote on new predictions -> predictions_final.csv
    Predict(PredictArgs),
    /// Synthetic labels and model predictions -> labels.csv, predictions.csv
    Synth(SynthArgs),
    /// Ensemble-versus-best-model gain over synthetic replications -> gain.json
    Gain(GainArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn into_config(self, flags: RunConfig) -> anyhow::Result<RunConfig> {
        let flags = RunConfig { out: self.out, threads: self.threads, ..flags };
        Ok(match self.config {
            Some(path) => flags.or(RunConfig::load(&path)?),
            None => flags,
        })
    }
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    let [a, b, c] = parts[..] else {
        return Err("expected three comma-separated values, e.g. 0.8,0.1,0.1".into());
    };
    SplitRatios::new(a, b, c).map_err(|e| e.to_string())?;
    Ok([a, b, c])
}

fn parse_priors(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected four comma-separated values (rubbish,healthy,unhealthy,both)".into())
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of folds.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    folds: Option<u32>,
    /// train,val,test fractions.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 3]>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV `image_id,group`; keeps each group within one subset.
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, value_enum)]
    stage1_objective: Option<Stage1Objective>,
    #[arg(long, value_enum)]
    stage2_objective: Option<Stage2Objective>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Seed of the random-prediction baseline row.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// `ensemble` or a model id.
    #[arg(long)]
    method: Option<String>,
    /// Optional labels; scores the voted predictions.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    folds: Option<u32>,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    models: Option<usize>,
    /// Skill shared by every model, in [0, 1].
    #[arg(long)]
    skill: Option<f64>,
    /// Shared-noise fraction, in [0, 1].
    #[arg(long)]
    correlation: Option<f64>,
    /// rubbish,healthy,unhealthy,both priors.
    #[arg(long, value_parser = parse_priors)]
    priors: Option<[f64; 4]>,
}

impl GeneratorArgs {
    fn into_config(self, replications: Option<usize>) -> RunConfig {
        let model_skill = self.skill.map(|s| vec![s; self.models.unwrap_or(cascade::config::DEFAULT_MODELS)]);
        RunConfig {
            seed: self.seed,
            folds: self.folds.map(|f| f as usize),
            synthetic: Some(SynthSettings {
                n_images: self.images,
                class_priors: self.priors,
                n_models: self.models,
                model_skill,
                inter_model_correlation: self.correlation,
                replications,
            }),
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Debug, Args)]
struct GainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    replications: Option<usize>,
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Split(a) => {
            let flags = RunConfig {
                labels: a.labels,
                folds: a.folds.map(|f| f as usize),
                ratios: a.ratios,
                seed: a.seed,
                groups: a.groups,
                ..Default::default()
            };
            commands::cmd_split(a.common.into_config(flags)?)?;
        }
        Command::Calibrate(a) => {
            let flags = RunConfig {
                predictions: a.predictions,
                labels: a.labels,
                splits: a.splits,
                stage1_objective: a.stage1_objective,
                stage2_objective: a.stage2_objective,
                ..Default::default()
            };
            commands::cmd_calibrate(a.common.into_config(flags)?)?;
        }
        Command::Evaluate(a) => {
            let flags = RunConfig {
                predictions: a.predictions,
                labels: a.labels,
                splits: a.splits,
                thresholds: a.thresholds,
                seed: a.seed,
                ..Default::default()
            };
            commands::cmd_evaluate(a.common.into_config(flags)?)?;
        }
        Command::Predict(a) => {
            let flags = RunConfig {
                predictions: a.predictions,
                thresholds: a.thresholds,
                method: a.method,
                labels: a.labels,
                ..Default::default()
            };
            commands::cmd_predict(a.common.into_config(flags)?)?;
        }
        Command::Synth(a) => {
            commands::cmd_synth(a.common.into_config(a.generator.into_config(None))?)?;
        }
        Command::Gain(a) => {
            commands::cmd_gain(a.common.into_config(a.generator.into_config(a.replications))?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASCADE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
