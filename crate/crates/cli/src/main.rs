mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use solnet::{Error, ErrorClass, Result};

use commands::{Ctx, ExperimentChoice};
use config::RunConfig;

/// Day-ahead PV forecasting with LSTM transfer learning.
///
/// Exit codes: 0 success, 1 I/O, 2 configuration, 3 data, 4 numerical,
/// 5 network.
#[derive(Parser)]
#[command(name = "solnet", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set experiment.model.hidden_units=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Allow HTTP requests to PVGIS and Open-Meteo. Without it only cached
    /// responses are used.
    #[arg(long, global = true)]
    live: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download (or generate) the source-domain series and write it as CSV.
    Fetch,
    /// Train the source model and write `source.ckpt`.
    BuildSource,
    /// Fine-tune `data.checkpoint` on the target data.
    Finetune,
    /// Forecast the day after `data.history_csv`.
    Forecast,
    /// Score `data.checkpoint` and persistence on the target test span.
    Evaluate,
    /// Run an experiment grid and write its report, plot data and skill tables.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentChoice,
    },
    /// Write a synthetic target site (`pv.csv`, `weather.csv`).
    Synth,
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Io => 1,
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Network => 5,
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { cfg, live: cli.live };
    ctx.prepare_output()?;
    match cli.command {
        Command::Fetch => commands::fetch(&ctx),
        Command::BuildSource => commands::build_source(&ctx),
        Command::Finetune => commands::finetune(&ctx),
        Command::Forecast => commands::forecast(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Experiment { kind } => commands::experiment(&ctx, kind),
        Command::Synth => commands::synth(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
