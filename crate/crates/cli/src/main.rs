//! `ard`: identification, surrogate fitting and attack reachable domain
//! assessment of grid-forming inverters from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use ard_core::error::Error;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent input files.
    Config(String),
    /// A numerical stage failed.
    Run(Error),
    /// A quality gate refused the result.
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(e) if matches!(e.root(), Error::OverConstrained { .. }) => 4,
            CliError::Run(_) | CliError::Gate(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Gate(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "ard", version, about = "Attack reachable domain assessment for grid-forming inverters")]
struct Cli {
    /// Overrides the sampling and fitting seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a surrogate training dataset from synthetic transients.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bus: Option<u32>,
    },
    /// Fit the rational surrogate to a dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bus: Option<u32>,
        /// Dataset directory; defaults to the one written by `identify`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Reachable domains and API of one bus.
    Ard {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bus: u32,
        #[arg(long)]
        mode_index: Option<usize>,
        #[arg(long)]
        directions: Option<usize>,
        /// Output directory; defaults to the config's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assess every target bus and rank by API.
    Rank {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the shipped demo configs and run the full pipeline on them.
    Demo {
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<config::Loaded, CliError> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.apply_seed(s);
    }
    let loaded = cfg.load(path)?;
    commands::write_effective_config(&loaded)?;
    Ok(loaded)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v).map_err(Error::from)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Identify { config, bus } => {
            let l = load(&config, cli.seed)?;
            let bus = l.bus_or_default(bus)?;
            print_json(&commands::identify(&l, bus)?)
        }
        Command::Fit { config, bus, dataset } => {
            let l = load(&config, cli.seed)?;
            let bus = l.bus_or_default(bus)?;
            print_json(&commands::fit(&l, bus, dataset.as_deref())?)
        }
        Command::Ard {
            config,
            bus,
            mode_index,
            directions,
            out,
        } => {
            let mut l = load(&config, cli.seed)?;
            let bus = l.bus_or_default(Some(bus))?;
            if let Some(n) = directions {
                if n < ard_core::ard::MIN_DIRECTIONS {
                    return Err(CliError::Config(format!(
                        "--directions must be at least {}",
                        ard_core::ard::MIN_DIRECTIONS
                    )));
                }
            }
            if let Some(o) = out {
                l.output_dir = o;
            }
            let r = commands::assess(&l, bus, mode_index, directions)?;
            commands::write_bus(&l.output_dir, &r)?;
            match cli.format {
                Format::Json => print_json(&r.report),
                Format::Csv => {
                    print!("{}", commands::bus_summary_csv(&r.report));
                    Ok(())
                }
            }
        }
        Command::Rank { config } => {
            let l = load(&config, cli.seed)?;
            let (ranking, reports) = commands::rank(&l)?;
            commands::print_ranking(&ranking, &reports, cli.format)
        }
        Command::Demo { out } => commands::demo(&out, cli.seed, cli.format),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
