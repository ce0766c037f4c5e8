//! `diffrt`: forward simulation, synthetic datasets, calibration,
//! localization and loss landscapes from the command line.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diffrt::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "diffrt", version, about = "Differentiable wireless ray tracing and inverse optimization")]
struct Cli {
    /// Worker threads (defaults to $DIFFRT_THREADS, then the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the CSI of a scene.
    Simulate(commands::SimulateArgs),
    /// Simulate CSI at a list of receiver positions.
    GenDataset(commands::GenDatasetArgs),
    /// Calibrate object positions and materials against a dataset.
    Calibrate(commands::CalibrateArgs),
    /// Localize a target object or transceiver from reference CSI.
    Localize(commands::LocalizeArgs),
    /// Sweep the localization loss over a grid.
    Landscape(commands::LandscapeArgs),
    /// Write one of the built-in scenes.
    MakeScene(commands::MakeSceneArgs),
    /// Run the built-in numerical checks.
    SelfCheck,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite { .. } | Error::Diverged { .. } => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into() }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DIFFRT_THREADS") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("DIFFRT_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = threads(cli.threads)? {
        if n == 0 {
            return Err(Failure::usage("thread count must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::GenDataset(a) => commands::gen_dataset(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Localize(a) => commands::localize(a),
        Command::Landscape(a) => commands::landscape(a),
        Command::MakeScene(a) => commands::make_scene(a),
        Command::SelfCheck => commands::self_check(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
