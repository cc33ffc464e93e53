//! `ionhbt`: simulate, ingest and analyze far-field photon-pair data.
//!
//! Exit status: 0 ok, 1 input or configuration error, 2 no correlation
//! signal, 3 the measured components do not form a consistent geometry.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ionhbt_core::{presets, Error, SceneConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ionhbt", version, about = "Emitter geometry from two-photon far-field correlations")]
struct Cli {
    /// Scene configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in scene used when no config file is given.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    /// Override one config key, e.g. `--set optics.magnification=14.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "IONHBT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    TwoIon,
    Triangle,
    Single,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate coincidence pairs, or a raw two-detector event stream.
    Simulate(SimulateArgs),
    /// Match an event stream into coincidence pairs.
    Ingest(IngestArgs),
    /// Orientation scan, row fits and geometry for a pair file.
    Analyze(AnalyzeArgs),
    /// Statistical error of the fringe frequency versus pair count.
    Scaling(ScalingArgs),
    /// Ion distance and expected fringe frequency from trap and optics parameters.
    Calibrate(CalibrateArgs),
    /// Rerun the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of pairs (default: `sim.n_pairs`).
    #[arg(long, conflicts_with = "stream")]
    pub pairs: Option<usize>,
    /// Write a raw time-tagged event stream instead of pairs.
    #[arg(long)]
    pub stream: bool,
    /// Stream acquisition time in seconds (default: `sim.duration`).
    #[arg(long, requires = "stream")]
    pub duration: Option<f64>,
    /// Default: `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the stream as CSV instead of binary.
    #[arg(long, requires = "stream")]
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Event stream (`.csv` or binary).
    pub input: PathBuf,
    /// Coincidence window in ns.
    #[arg(long, default_value_t = 2.5)]
    pub window: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalysisFlags {
    /// Orientation grid step in degrees.
    #[arg(long, default_value_t = 0.1)]
    pub phi_step: f64,
    /// Start rows to fit: `auto` or an inclusive range `a..b`.
    #[arg(long, default_value = "auto")]
    pub rows: String,
    /// Bins per projected axis.
    #[arg(long, default_value_t = 96)]
    pub bins: usize,
    /// Default: the seed in the pair file header, else `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Pair file (CSV).
    pub input: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
    /// Bootstrap resamples for the orientation uncertainty.
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScalingArgs {
    /// Pair file (CSV).
    pub input: PathBuf,
    /// Subsample sizes, comma separated (default: six log-spaced sizes from 2000 to all pairs).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Subsamples per size.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Print JSON instead of the labeled text report.
    #[arg(long)]
    pub json: bool,
    /// Also write both forms and a manifest into this directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Geometry could not be solved from otherwise valid components.
#[derive(Debug)]
pub struct StructureFailure(pub String);

impl std::fmt::Display for StructureFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "structure: {}", self.0)
    }
}

impl std::error::Error for StructureFailure {}

fn resolve_config(cli: &Cli) -> Result<SceneConfig> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
        (Some(path), None) => SceneConfig::load(path)?,
        (None, Some(Preset::Triangle)) => presets::triangle(),
        (None, Some(Preset::Single)) => presets::single_emitter(),
        (None, Some(Preset::TwoIon) | None) => presets::two_ion(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<StructureFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NoSignal) => 2,
        Some(Error::ClosureFailure { .. } | Error::AmbiguousCount { .. }) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    if let Command::Replay(args) = &cli.command {
        return commands::replay(args);
    }
    let cfg = resolve_config(&cli)?;
    commands::execute(cli.command, cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
