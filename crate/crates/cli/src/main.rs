//! `dds`: simulate or replay driving sessions, calibrate a resting baseline,
//! and manage the encrypted store.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dds_core::engine::EngineMode;
use dds_core::hrv::TimeOfDay;
use dds_core::sensor::{DriverProfile, Fitness, Gender};

mod commands;
mod output;

/// Environment variable holding the store passphrase.
pub const PASSPHRASE_ENV: &str = "DDS_PASSPHRASE";

#[derive(Debug, Parser)]
#[command(name = "dds", version, about = "Wearable driver drowsiness detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a session and run detection on it.
    Simulate(SimulateArgs),
    /// Run detection on a recorded session file.
    Replay(ReplayArgs),
    /// Measure a resting baseline and save it in the encrypted store.
    Calibrate(CalibrateArgs),
    /// Print decrypted preferences as JSON on stdout.
    Export(StoreArgs),
    /// Create a fresh salt and wrapped keyset (and a store, with --store).
    Keygen(KeygenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    AlertDrive,
    DrowsyOnset,
    StopAndGo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenderArg {
    Female,
    Male,
    Unspecified,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitnessArg {
    Sedentary,
    Active,
    Athlete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Unsupervised,
    Calibrated,
}

impl From<ModeArg> for EngineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unsupervised => EngineMode::Unsupervised,
            ModeArg::Calibrated => EngineMode::Calibrated,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Driver age in years (16-120).
    #[arg(long, default_value_t = 40)]
    pub age: u8,
    #[arg(long, value_enum, default_value_t = GenderArg::Unspecified)]
    pub gender: GenderArg,
    #[arg(long, value_enum, default_value_t = FitnessArg::Sedentary)]
    pub fitness: FitnessArg,
}

impl ProfileArgs {
    pub fn profile(&self) -> Result<DriverProfile, CliError> {
        let gender = match self.gender {
            GenderArg::Female => Gender::Female,
            GenderArg::Male => Gender::Male,
            GenderArg::Unspecified => Gender::Unspecified,
        };
        let fitness = match self.fitness {
            FitnessArg::Sedentary => Fitness::Sedentary,
            FitnessArg::Active => Fitness::Active,
            FitnessArg::Athlete => Fitness::Athlete,
        };
        DriverProfile::new(self.age, gender, fitness).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Drowsiness onset in seconds (drowsy-onset only; default half the duration).
    #[arg(long)]
    pub onset: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Session length in seconds.
    #[arg(long, default_value_t = 3600)]
    pub duration: u32,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Local time at the start of the session (HH:MM).
    #[arg(long, default_value = "02:00")]
    pub start: TimeOfDay,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Session file (JSON Lines).
    #[arg(long = "input", short = 'i')]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Unsupervised)]
    pub mode: ModeArg,
    /// Baseline JSON file for calibrated mode.
    #[arg(long, conflicts_with = "store")]
    pub baseline: Option<PathBuf>,
    /// Read the baseline from this store instead (passphrase from DDS_PASSPHRASE).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "02:00")]
    pub start: TimeOfDay,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Resting session file (JSON Lines) with at least 5 minutes of beats.
    #[arg(long = "input", short = 'i')]
    pub input: PathBuf,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Initialise a new store here instead of only printing key material.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// PBKDF2 iterations.
    #[arg(long, default_value_t = dds_core::store::DEFAULT_ITERATIONS)]
    pub iterations: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Replay(a) => commands::replay(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Export(a) => commands::export(&a),
        Command::Keygen(a) => commands::keygen(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Runtime(inner) => eprintln!("error: {inner:#}"),
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
