mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privic_core::Error;

/// Location-privacy studies: BA and Laplace obfuscation, IBU estimation and
/// the PRIVIC collection loop.
#[derive(Debug, Parser)]
#[command(name = "privic", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a check-in dump and report what falls on the grid.
    Ingest(Common),
    /// EMD of IBU estimates under BA and Laplace over a loss sweep.
    Compare(Common),
    /// Obfuscation rows of an isolated and a dense cell.
    Elastic {
        #[command(flatten)]
        common: Common,
        /// Cell index to isolate; default near the bottom-right corner.
        #[arg(long)]
        vulnerable: Option<usize>,
        /// Cell index in a dense area; default the prior mode.
        #[arg(long)]
        strong: Option<usize>,
        /// Emptied ring around the vulnerable cell, in cells.
        #[arg(long)]
        radius: Option<usize>,
        /// Comma-separated privacy levels, 1/km.
        #[arg(long = "epsilon", value_delimiter = ',')]
        epsilons: Vec<f64>,
    },
    /// PRIVIC traces, one per loss value and seed.
    Privic(Common),
    /// The one-cycle transition matrix on a simplex mesh and its stationary law.
    Markov {
        #[command(flatten)]
        common: Common,
        /// Number of cells.
        #[arg(long)]
        m: Option<usize>,
        /// Mesh granularity; coordinates are multiples of 1/k.
        #[arg(long)]
        k: Option<usize>,
        /// Simulated cycles per mesh state.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Channel metrics of BA and Laplace per loss value.
    Metrics(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long = "seed", value_delimiter = ',', num_args = 1..)]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated loss values, 1/km.
    #[arg(long = "beta", value_delimiter = ',')]
    pub betas: Vec<f64>,
    /// PRIVIC cycles per run.
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Grid as rows x columns, e.g. 12x16.
    #[arg(long)]
    pub grid: Option<String>,
    /// lat_min,lat_max,lon_min,lon_max
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<String>,
    /// uniform | paris | bumps:x,y,sigma,weight;...[@floor]
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Tab-separated check-in dump.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use every check-in every cycle instead of resampling.
    #[arg(long)]
    pub fixed_dataset: bool,
    /// Samples per run or cycle.
    #[arg(long)]
    pub n: Option<usize>,
    /// Fixed BA iteration count instead of a tolerance stop.
    #[arg(long)]
    pub ba_iters: Option<usize>,
    /// Fixed IBU iteration count instead of a tolerance stop.
    #[arg(long)]
    pub ibu_iters: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Capability(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
