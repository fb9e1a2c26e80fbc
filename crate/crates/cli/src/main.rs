use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sdm_cli::commands;
use sdm_cli::{CliError, CliResult, ReportFormat, RunConfig};

/// Bayesian spatial Durbin panel models with k-nearest-neighbour weights.
#[derive(Debug, Parser)]
#[command(name = "sdm", version)]
struct Cli {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format for standard output and report files.
    #[arg(long, global = true, value_enum)]
    format: Option<ReportFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct DataArgs {
    /// Panel file (region_id, period, y, regressors...).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Coordinates file (region_id, x, y).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Weight triplets (i, j, weight) used instead of k-NN on the coordinates.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Neighbour count for the k-NN weights.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel, coordinates, truth and weights.
    Simulate {
        /// Number of regions.
        #[arg(long)]
        n: Option<usize>,
        /// Number of periods.
        #[arg(long)]
        t: Option<usize>,
        /// Neighbour count of the generating weights.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score a range of k-nearest-neighbour matrices by log-marginal likelihood.
    SelectK {
        #[command(flatten)]
        data: DataArgs,
        /// Smallest candidate k.
        #[arg(long)]
        k_min: Option<usize>,
        /// Largest candidate k.
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Run the sampler and write draws and the estimate table.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Total iterations, burn-in included.
        #[arg(long)]
        ndraw: Option<usize>,
        /// Burn-in iterations discarded.
        #[arg(long)]
        nburn: Option<usize>,
    },
    /// Direct, indirect and total impact estimates from a draws file.
    Impacts {
        #[command(flatten)]
        data: DataArgs,
        /// Draws file (default: draws.csv in the output directory).
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Number of simulated parameter draws.
        #[arg(long)]
        ndraws: Option<usize>,
    },
    /// Convergence diagnostics from a draws file.
    Diagnose {
        /// Draws file (default: draws.csv in the output directory).
        #[arg(long)]
        draws: Option<PathBuf>,
    },
}

fn existing(p: PathBuf) -> CliResult<PathBuf> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingInput(p))
    }
}

fn apply_data(cfg: &mut RunConfig, d: DataArgs) -> CliResult<()> {
    if let Some(p) = d.panel {
        cfg.data.panel = Some(existing(p)?);
    }
    if let Some(p) = d.coords {
        cfg.data.coordinates = Some(existing(p)?);
    }
    if let Some(p) = d.weights {
        cfg.data.weights = Some(existing(p)?);
    }
    if let Some(k) = d.k {
        cfg.weights.k = k;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    // Echo the effective seed in the run manifest.
    cfg.seed = Some(cfg.seed());
    let outcome = match cli.command {
        Command::Simulate { n, t, k } => {
            cfg.simulate.n = n.unwrap_or(cfg.simulate.n);
            cfg.simulate.t = t.unwrap_or(cfg.simulate.t);
            cfg.weights.k = k.unwrap_or(cfg.weights.k);
            commands::simulate(&cfg)?
        }
        Command::SelectK { data, k_min, k_max } => {
            apply_data(&mut cfg, data)?;
            cfg.weights.k_min = k_min.unwrap_or(cfg.weights.k_min);
            cfg.weights.k_max = k_max.unwrap_or(cfg.weights.k_max);
            commands::select_k_cmd(&cfg)?
        }
        Command::Fit { data, ndraw, nburn } => {
            apply_data(&mut cfg, data)?;
            cfg.mcmc.ndraw = ndraw.unwrap_or(cfg.mcmc.ndraw);
            cfg.mcmc.nburn = nburn.unwrap_or(cfg.mcmc.nburn);
            commands::fit(&cfg)?
        }
        Command::Impacts { data, draws, ndraws } => {
            apply_data(&mut cfg, data)?;
            if let Some(p) = draws {
                cfg.data.draws = Some(existing(p)?);
            }
            cfg.impacts.ndraws = ndraws.unwrap_or(cfg.impacts.ndraws);
            commands::impacts(&cfg)?
        }
        Command::Diagnose { draws } => {
            if let Some(p) = draws {
                cfg.data.draws = Some(existing(p)?);
            }
            commands::diagnose(&cfg)?
        }
    };
    Ok(outcome.stdout)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            let _ = std::io::stdout().write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
