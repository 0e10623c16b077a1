//! `lodc`: dataset generation, training, evaluation and LOD error studies.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lodc::experiment::{eval_model, gen_data, lod_study, train_model, Experiment, ExperimentConfig, Preset};
use lodc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "lodc",
    version,
    about = "Operator compression with PG-LOD and a learned local surrogate"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON file overriding keys of the preset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for coefficients, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data generation and corrector solves [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scale preset the configuration starts from.
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentArg {
    Multiscale,
    Smooth,
    Cracks,
    Custom,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training, validation and test datasets.
    GenData,
    /// Train the network on a generated dataset.
    Train {
        /// Dataset directory [default: <out>/data].
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Continue from <out>/model/last.lodn.
        #[arg(long)]
        resume: bool,
    },
    /// Compare the network surrogate with the reference PG-LOD solution.
    Eval {
        #[arg(long, value_enum, default_value_t = ExperimentArg::Multiscale)]
        experiment: ExperimentArg,
        /// Checkpoint file [default: <out>/model/best.lodn].
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Coefficient file for the custom experiment.
        #[arg(long, value_name = "FILE", required_if_eq("experiment", "custom"))]
        coefficient: Option<PathBuf>,
    },
    /// Localization decay and h-convergence tables.
    LodStudy,
}

fn resolve_config(g: &GlobalArgs) -> lodc::Result<ExperimentConfig> {
    let preset = match g.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(preset, path)?,
        None => ExperimentConfig::preset(preset),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    if preset == Preset::Paper {
        eprintln!("warning: the paper preset is full scale: {}", cfg.resource_estimate()?);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> lodc::Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::GenData => {
            let m = gen_data(&cfg)?;
            println!(
                "wrote {} train, {} validation and {} test pairs to {}",
                m.pairs.train,
                m.pairs.val,
                m.pairs.test,
                cfg.data_dir().display()
            );
        }
        Command::Train { data, resume } => {
            let s = train_model(&cfg, data.as_deref(), resume)?;
            println!(
                "trained {} epochs; best epoch {} (validation {:.4e}), test loss {:.4e}",
                s.epochs, s.best_epoch, s.best_val_loss, s.test_loss
            );
        }
        Command::Eval {
            experiment,
            checkpoint,
            coefficient,
        } => {
            let experiment = match experiment {
                ExperimentArg::Multiscale => Experiment::Multiscale,
                ExperimentArg::Smooth => Experiment::Smooth,
                ExperimentArg::Cracks => Experiment::Cracks,
                ExperimentArg::Custom => Experiment::Custom(coefficient.expect("required by clap")),
            };
            let out = eval_model(&cfg, checkpoint.as_deref(), &experiment)?;
            for r in &out.reports {
                println!(
                    "{}: L2 error {:.4e} (relative {:.4e}), spectral difference {:.4e}",
                    r.name, r.l2_error, r.relative_l2_error, r.spectral_difference
                );
            }
        }
        Command::LodStudy => {
            let s = lod_study(&cfg)?;
            for r in &s.decay.rows {
                println!("layers {}: relative L2 error {:.4e}", r.layers, r.corrected_error);
            }
            println!("decay slope {:.3}", s.decay.corrected_slope);
            for r in &s.convergence.rows {
                println!("h {}: relative L2 error {:.4e}", r.h, r.error);
            }
            println!("convergence rate {:.3}", s.convergence.rate);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
