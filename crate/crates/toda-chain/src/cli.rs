//! Command-line definitions and the optional JSON config file.
//!
//! Every flag can also come from `--config file.json` (a flat JSON object
//! whose keys match the long flag names); explicit flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "toda-chain",
    version,
    about = "Controlled multiparticle chain: simulation, Lie-rank certification, feedback linearization, flatness steering, constrained controllability and time-optimal bang-bang control."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the controlled chain and report energy bookkeeping.
    Simulate(SimulateArgs),
    /// Distribution-rank profiles against the predicted spans.
    Rank(RankArgs),
    /// Flat coordinates, chart conditioning and feedback terms.
    Linearize(LinearizeArgs),
    /// Two-point steering through the flat chart.
    Steer(SteerArgs),
    /// Constrained-controls steering demonstration.
    Controllability(ControllabilityArgs),
    /// Minimum-time bang-bang relocation with a Pontryagin certificate.
    Mintime(MintimeArgs),
    /// Batch switching-structure audit of minimum-time solutions.
    Audit(AuditArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Particle count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Interaction model: toda | softplus[:scale] | ramp[:knee].
    #[arg(long)]
    pub potential: Option<String>,
    /// RNG seed for sampled states and solver multistarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Numerical tolerance (meaning per command; e.g. the SVD rank
    /// threshold for `rank`).
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON config file; explicit flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Horizon.
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    /// Fixed integration step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Number of steps (alternative to --step).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Constant control on the first particle.
    #[arg(long)]
    pub u: Option<f64>,
    /// Constant control on the last particle.
    #[arg(long)]
    pub v: Option<f64>,
    /// Initial state file `{"q": [...], "p": [...]}`; seeded Gaussian
    /// when absent.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    /// rk4 | splitting (splitting integrates the uncontrolled flow).
    #[arg(long)]
    pub integrator: Option<String>,
    /// Trajectory CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Scale of the seeded Gaussian initial state.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Random states to sample.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gaussian scale of the sampled states.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LinearizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// State file to analyse; seeded Gaussian when absent.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Extra random states for the batch audit.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SteerArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Start state file.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Target state file.
    #[arg(long)]
    pub to: Option<PathBuf>,
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Horizon doublings allowed on chart-inversion failure.
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ControllabilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub to: Option<PathBuf>,
    /// Control budget: u ∈ [−ω, ω], v ∈ [−ω, 0].
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub max_time: Option<f64>,
    #[arg(long)]
    pub max_segments: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MintimeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub to: Option<PathBuf>,
    /// Rest-to-rest relocation distance (single-particle shorthand).
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Per-channel switch cap.
    #[arg(long)]
    pub max_switches: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of random relocation instances.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Audit window length for zero counts.
    #[arg(long)]
    pub window: Option<f64>,
}

/// Flat config-file schema: keys match the long flag names.
#[derive(Deserialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub potential: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub step: Option<f64>,
    pub steps: Option<usize>,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub integrator: Option<String>,
    pub scale: Option<f64>,
    pub samples: Option<usize>,
    pub omega: Option<f64>,
    pub d: Option<f64>,
    pub max_switches: Option<usize>,
    pub max_time: Option<f64>,
    pub max_segments: Option<usize>,
    pub retries: Option<u32>,
    pub count: Option<usize>,
    pub window: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("parsing {}: {e}", p.display()))
            }
        }
    }
}
