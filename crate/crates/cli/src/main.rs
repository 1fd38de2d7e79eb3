use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod error;

#[derive(Parser, Debug)]
#[command(name = "emodm", version, about = "Outlier detection on relative change rates with a two-component Gaussian mixture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the mixture to a CSV series and report flagged points and segments.
    Detect(DetectArgs),
    /// Generate a labelled benchmark trace.
    Simulate(SimulateArgs),
    /// Score values one per line, printing a JSON object per alarm.
    Stream(StreamArgs),
    /// Run the mixture detector and the classical baselines on a labelled trace.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayout {
    /// timestamp column followed by one column per key
    Wide,
    /// key, timestamp, value columns
    Long,
    /// a trace written by `simulate`
    Trace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    SallenKey,
    Llg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperSingle,
    PaperDouble,
    PaperMulti,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DetectorFlags {
    /// Posterior threshold above which a point is flagged.
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,
    /// Minimum number of valid rates before fitting.
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Online samples between full refits.
    #[arg(long, default_value_t = 100)]
    pub refit_period: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonFlags {
    /// Seed for every random choice.
    #[arg(long, env = "EMODM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving the output files and manifest.json.
    #[arg(long, default_value = "emodm-out")]
    pub output_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputLayout::Wide)]
    pub layout: InputLayout,
    /// Series to analyse; by default the only series, or the sum of all of them.
    #[arg(long)]
    pub key: Option<String>,
    /// Apply log10 to the values before computing rates.
    #[arg(long)]
    pub log10: bool,
    #[command(flatten)]
    pub detector: DetectorFlags,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimKind,
    #[arg(long, value_enum, default_value_t = Preset::PaperSingle)]
    pub preset: Preset,
    /// Monte-Carlo draws per period (Sallen-Key only).
    #[arg(long)]
    pub mc_draws: Option<usize>,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Args, Debug, Serialize)]
pub struct StreamArgs {
    /// File with one value per line; standard input when omitted or `-`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorFlags,
    #[command(flatten)]
    pub common: CommonFlags,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    /// Labelled trace CSV; required unless --preset is given.
    #[arg(long, conflicts_with = "preset")]
    pub input: Option<PathBuf>,
    /// Simulate the trace instead of reading one.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum, default_value_t = SimKind::SallenKey)]
    pub kind: SimKind,
    #[arg(long)]
    pub mc_draws: Option<usize>,
    /// Include the local outlier factor method.
    #[arg(long)]
    pub lof: bool,
    #[command(flatten)]
    pub detector: DetectorFlags,
    #[command(flatten)]
    pub common: CommonFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Stream(a) => commands::stream(a),
        Command::Compare(a) => commands::compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
