//! `restake`: security verdicts, allocations, bribery costs, price risk and
//! Monte Carlo runs from the command line.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when an internal
//! invariant check fails.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Common, ModelInputs, SimulateOverrides};
use config::{Format, ModelSection, Number, NumberList, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl From<restake::Error> for CliError {
    fn from(e: restake::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "restake", version, about = "Economic security of restaked services")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular outputs [default: csv].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by `security` and `bribery`. Numbers accept fractions.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// Allocation CSV: `validator,<ssp ids…>`, one row per validator.
    #[arg(long)]
    allocation: Option<PathBuf>,
    /// Validator stakes, comma separated; the allocation's row sums by default.
    #[arg(long)]
    stakes: Option<NumberList>,
    #[arg(long)]
    pi: Option<Number>,
    #[arg(long)]
    theta: Option<Number>,
    #[arg(long)]
    rate: Option<Number>,
    #[arg(long)]
    reward: Option<Number>,
    #[arg(long)]
    single_ssp: Option<usize>,
}

impl ModelFlags {
    fn merge(self, file: Option<ModelSection>) -> (ModelSection, Option<PathBuf>) {
        let f = file.unwrap_or_default();
        let section = ModelSection {
            allocation: f.allocation,
            omega: f.omega,
            stakes: self
                .stakes
                .map(|l| l.0.into_iter().map(Number).collect())
                .or(f.stakes),
            pi: self.pi.or(f.pi),
            theta: self.theta.or(f.theta),
            rate: self.rate.or(f.rate),
            reward: self.reward.or(f.reward),
            single_ssp: self.single_ssp.or(f.single_ssp),
            slashing: f.slashing,
        };
        (section, self.allocation)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Weak/strong verdicts, validator bound and attack costs per model.
    Security(ModelFlags),
    /// Maximin allocation (or equalize a given one) and equilibrium report.
    Optimize {
        #[arg(long)]
        stakes: Option<NumberList>,
        #[arg(long)]
        k: Option<usize>,
        /// Starting allocation for the iterative equalizer.
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[arg(long)]
        theta: Option<Number>,
        #[arg(long)]
        rate: Option<Number>,
        #[arg(long)]
        probes: Option<usize>,
    },
    /// Cheapest bribery coalition per SSP and the shared-pool comparison.
    Bribery(ModelFlags),
    /// Correlations, covariances, volatility shocks and FSD from a price CSV.
    Risk {
        /// CSV with header `date,asset,close`.
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Most recent daily returns used [default: 365].
        #[arg(long)]
        window: Option<usize>,
        /// Asset to shock; every asset in turn by default.
        #[arg(long)]
        shock_asset: Option<String>,
        #[arg(long)]
        shock_factor: Option<Number>,
        #[arg(long)]
        theta: Option<Number>,
    },
    /// Monte Carlo comparison of the isolated and shared models.
    Simulate {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        operators: Option<usize>,
        #[arg(long)]
        ssps: Option<usize>,
        #[arg(long)]
        theta: Option<Number>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        no_bribery: bool,
        #[arg(long)]
        no_stress: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut file = RunConfig::load(cli.config.as_deref())?;
    let out = cli
        .out
        .or_else(|| file.out.as_ref().map(|p| file.resolve(p)))
        .unwrap_or_else(|| commands::default_out().to_path_buf());
    let common = Common {
        out,
        seed: cli.seed.or(file.seed),
        json: cli.format.or(file.format) == Some(Format::Json),
    };
    match cli.command {
        Command::Security(flags) => {
            let (section, path) = flags.merge(file.security.take());
            commands::security(ModelInputs::resolve(&file, section, path)?, &common)
        }
        Command::Bribery(flags) => {
            let (section, path) = flags.merge(file.bribery.take());
            commands::bribery(ModelInputs::resolve(&file, section, path)?, &common)
        }
        Command::Optimize {
            stakes,
            k,
            allocation,
            theta,
            rate,
            probes,
        } => {
            let mut section = file.optimize.take().unwrap_or_default();
            if let Some(s) = stakes {
                section.stakes = Some(s.0.into_iter().map(Number).collect());
            }
            section.k = k.or(section.k);
            section.theta = theta.or(section.theta);
            section.rate = rate.or(section.rate);
            section.probes = probes.or(section.probes);
            commands::optimize(&file, section, allocation, &common)
        }
        Command::Risk {
            prices,
            window,
            shock_asset,
            shock_factor,
            theta,
        } => {
            let mut section = file.risk.take().unwrap_or_default();
            if let Some(p) = prices {
                // flag paths are relative to the working directory
                section.prices = Some(std::path::absolute(&p).unwrap_or(p));
            }
            section.window = window.or(section.window);
            section.shock_asset = shock_asset.or(section.shock_asset);
            section.shock_factor = shock_factor.or(section.shock_factor);
            section.theta = theta.or(section.theta);
            commands::risk(&file, section, &common)
        }
        Command::Simulate {
            trials,
            operators,
            ssps,
            theta,
            workers,
            no_bribery,
            no_stress,
        } => {
            let flags = SimulateOverrides {
                trials,
                operators,
                ssps,
                theta: theta.map(|t| t.0),
                workers,
                no_bribery,
                no_stress,
            };
            let cfg = commands::simulation_config(&file, &flags, cli.seed)?;
            commands::simulate(cfg, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
