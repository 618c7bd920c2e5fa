use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtbarrier_core::{Comparison, GenderFilter};

mod commands;
mod output;

pub const DEFAULT_SEED: u64 = 20220717;
pub const DATA_DIR_ENV: &str = "RTBARRIER_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "rtbarrier", version, about = "Reaction-time analyses for sprint false-start barriers")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Reaction-time CSV. Defaults to `reaction_times.csv` in the data directory.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Directory holding `reaction_times.csv` and `exclusions.csv`.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clustered rank-sum comparisons between competitions.
    Clusrank(ClusrankArgs),
    /// Fit the venue/heat generalized Gamma mixed model.
    Fit(FitArgs),
    /// Tail probabilities and barriers from a fitted model.
    Tail(TailArgs),
    /// Run every analysis into a timestamped directory.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ClusrankArgs {
    /// Comparison to run; repeat for several. Defaults to all three.
    #[arg(long = "compare")]
    pub compare: Vec<Comparison>,
    /// Gender filter. Defaults to men and women separately.
    #[arg(long)]
    pub gender: Option<GenderFilter>,
    /// Same as `--gender pooled`.
    #[arg(long, conflicts_with = "gender")]
    pub pool_genders: bool,
    /// Permutations; 0 runs the asymptotic test only.
    #[arg(long, default_value_t = 1_000_000)]
    pub permutations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    #[arg(long, default_value = "men")]
    pub gender: GenderFilter,
    #[arg(long, overrides_with = "no_include_2022")]
    pub include_2022: bool,
    #[arg(long, overrides_with = "include_2022")]
    pub no_include_2022: bool,
    #[arg(long, overrides_with = "no_include_dq")]
    pub include_dq: bool,
    #[arg(long, overrides_with = "include_dq")]
    pub no_include_dq: bool,
    /// Athlete/heat pairs to drop. Defaults to `exclusions.csv` in the
    /// data directory when fitting women.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
}

impl ModelFlags {
    pub fn include_2022(&self) -> bool {
        self.include_2022 || !self.no_include_2022
    }

    pub fn include_dq(&self) -> bool {
        self.include_dq || !self.no_include_dq
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    /// Simulated draws behind the density overlay.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    /// Fit report or bare model JSON.
    #[arg(long, required_unless_present = "params", conflicts_with = "params")]
    pub model: Option<PathBuf>,
    /// Population parameters `beta0,gamma0,nu,tau_v,tau_h`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.08, 0.09, 0.10])]
    pub thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub targets: Vec<f64>,
    #[arg(long, default_value_t = rtbarrier_core::tailsim::DEFAULT_DRAWS)]
    pub draws: usize,
    /// Output files are `tail_<label>.json`, `tail_<label>.csv` and
    /// `barriers_<label>.csv`.
    #[arg(long, default_value = "model")]
    pub label: String,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    /// 10^4 permutations and 10^5 draws.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
