//! Command-line surface. Every subcommand shares `--seed`, `--out-dir` and
//! `--config`; explicit flags override config-file values.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use covflow_core::experiments::GroupChoice;

#[derive(Debug, Parser)]
#[command(
    name = "covflow",
    version,
    about = "Covariance dynamics of coupling-based flows: whitening simulator and bound calculator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate eigenvalue spectra and print their summary statistics.
    Spectrum(SpectrumArgs),
    /// Evaluate the closed-form bounds for given spectra.
    Bounds(BoundsArgs),
    /// One rotate-and-whiten step averaged over rotations, swept over scales.
    SingleBlock(SingleBlockArgs),
    /// Stacked blocks applied layer by layer until the loss is exhausted.
    Deep(DeepArgs),
    /// Monte Carlo validation of the closed-form identities.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Base seed for all random streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Flat JSON config file; flags given here override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Family name: power, reciprocal, exponential, single-varied,
    /// all-but-one-varied, two-halves, uniform-random, log-uniform-random.
    #[arg(long)]
    pub family: String,
    /// Exponent for the power family.
    #[arg(long)]
    pub p: Option<u32>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Varied eigenvalue for a single structured-family spectrum.
    #[arg(long)]
    pub value: Option<f64>,
    /// Number of spectra for family sweeps and random families.
    #[arg(long)]
    pub n_vary: Option<usize>,
    /// Extent of the varied-value range [1/v_max, v_max].
    #[arg(long)]
    pub v_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Spectra JSON file as written by the spectrum subcommand.
    #[arg(long)]
    pub spectra: Option<PathBuf>,
    /// Inline spectrum: comma-separated eigenvalues (normalized before use).
    #[arg(long)]
    pub values: Option<String>,
    /// Depth for the telescoped deep bound column.
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SingleBlockArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parametric family to sweep: all, power, reciprocal, exponential.
    #[arg(long, default_value = "all")]
    pub family: String,
    /// Exponent for the power family.
    #[arg(long)]
    pub p: Option<u32>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_scale: Option<usize>,
    #[arg(long)]
    pub n_rot: Option<usize>,
    /// Rotation ensemble: orthogonal, unitary, both.
    #[arg(long, value_parser = parse_group)]
    pub group: Option<GroupChoice>,
    /// Apply the distinctness perturbation to each base spectrum.
    #[arg(long)]
    pub perturb: bool,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DeepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub n_rot: Option<usize>,
    #[arg(long)]
    pub n_vary: Option<usize>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Rotation ensemble: orthogonal or unitary.
    #[arg(long, value_parser = parse_group)]
    pub group: Option<GroupChoice>,
    /// Draw fresh rotations per trajectory instead of sharing per layer.
    #[arg(long)]
    pub independent_rotations: bool,
    /// Also write per-layer bound comparison rows (retains layer spectra).
    #[arg(long)]
    pub compare_bounds: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Reduced sample counts for a fast smoke check.
    #[arg(long)]
    pub quick: bool,
}

fn parse_group(s: &str) -> Result<GroupChoice, String> {
    match s {
        "orthogonal" => Ok(GroupChoice::Orthogonal),
        "unitary" => Ok(GroupChoice::Unitary),
        "both" => Ok(GroupChoice::Both),
        other => Err(format!(
            "unknown group '{other}' (expected orthogonal, unitary or both)"
        )),
    }
}
