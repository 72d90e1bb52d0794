use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use exsd_hawkes::Variant;

#[derive(Debug, Parser)]
#[command(name = "exsd", version, about = "Gated state-dependent Hawkes models for order-book event streams")]
pub struct Cli {
    /// TOML file whose keys mirror the long flag names (with underscores);
    /// flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to one or more event streams.
    Fit(FitArgs),
    /// Simulate an ensemble of streams and mid-price paths.
    Simulate(SimulateArgs),
    /// Residual, goodness-of-fit and stability diagnostics.
    Diagnose(DiagnoseArgs),
    /// Realized-variance signature curve of mid-price paths.
    Signature(SignatureArgs),
    /// Write a reference scenario model and impact table.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Poisson,
    Const,
    Sd,
    Exsd,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Poisson => Variant::Poisson,
            VariantArg::Const => Variant::ConstHawkes,
            VariantArg::Sd => Variant::SdHawkes,
            VariantArg::Exsd => Variant::ExsdHawkes,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Event stream CSV; repeat to pool several sessions.
    #[arg(long = "stream", value_name = "CSV")]
    pub streams: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Output model JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit report JSON [default: --out with extension .report.json].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Session length for streams without a `# horizon=` line.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Impact table JSON [default: the built-in table for the taxonomy].
    #[arg(long)]
    pub impact: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Master seed; run i uses splitmix64(seed XOR i).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of runs.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub max_events: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// State label at time zero [default: the first state].
    #[arg(long)]
    pub initial_state: Option<String>,
    #[arg(long)]
    pub initial_price: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SignatureArgs {
    /// Mid-price CSV; repeatable.
    #[arg(long = "path", value_name = "CSV")]
    pub paths: Vec<PathBuf>,
    /// Simulation manifest; its non-truncated runs are used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated sampling intervals in seconds.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// One of poisson, subcritical, dual-regime, sd-leaky.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub out_impact: Option<PathBuf>,
}

/// Contents of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub stream: Option<PathBuf>,
    pub streams: Option<Vec<PathBuf>>,
    pub variant: Option<VariantArg>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub impact: Option<PathBuf>,
    pub seeds: Option<u64>,
    pub jobs: Option<usize>,
    pub max_events: Option<u64>,
    pub burn_in: Option<f64>,
    pub initial_state: Option<String>,
    pub initial_price: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub max_lag: Option<usize>,
    pub paths: Option<Vec<PathBuf>>,
    pub manifest: Option<PathBuf>,
    pub deltas: Option<Vec<f64>>,
    pub scenario: Option<String>,
    pub out_model: Option<PathBuf>,
    pub out_impact: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flag, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag, else config value, else an error naming the flag.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    match flag.or(file) {
        Some(v) => Ok(v),
        None => bail!("missing --{name}"),
    }
}
