//! `gridshare`: day-ahead microgrid scheduling and cost sharing from the command line.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridshare_core::{CodesConfig, EnergyRule};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gridshare", version, about = "Microgrid day-ahead scheduling and cost sharing")]
pub struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Directory for CSV and report outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for `gen`; solvers are deterministic and ignore it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the cooperative schedule and social cost.
    Solve(SolveArgs),
    /// Split the social cost by Nash bargaining.
    Allocate(AllocateArgs),
    /// Run CoDES and the centralized LP side by side.
    Compare(CompareArgs),
    /// Dump the consensus weight matrix.
    Weights,
    /// Check a scenario, and optionally a schedule CSV against it.
    Validate(ValidateArgs),
    /// Write randomly generated scenarios.
    Gen(GenArgs),
    /// Print the social LP (or one agent's stand-alone LP) as a tableau.
    DumpLp(DumpLpArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "method")]
pub struct MethodFlags {
    #[arg(long)]
    pub centralized: bool,
    #[arg(long)]
    pub codes: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub method: MethodFlags,
    #[command(flatten)]
    pub codes: CodesArgs,
    /// Trace CSV path (default: <out-dir>/trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SocialMethod {
    Centralized,
    Codes,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// Allocate by averaging consensus over the communication graph.
    #[arg(long)]
    pub distributed: bool,
    /// Consensus stopping tolerance on the node spread.
    #[arg(long, default_value_t = 1e-6)]
    pub graph_tol: f64,
    #[arg(long, value_enum, default_value_t = SocialMethod::Centralized)]
    pub social_method: SocialMethod,
    /// Also write each agent's stand-alone schedule into this directory.
    #[arg(long)]
    pub selfish_schedules: Option<PathBuf>,
    #[command(flatten)]
    pub codes: CodesArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Largest accepted relative cost gap.
    #[arg(long, default_value_t = 0.005)]
    pub tol: f64,
    #[command(flatten)]
    pub codes: CodesArgs,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Schedule CSV to check.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Power balance tolerance, kW.
    #[arg(long, default_value_t = 1e-3)]
    pub balance_tol: f64,
    /// Energy bound tolerance, kWh.
    #[arg(long, default_value_t = 1e-6)]
    pub energy_tol: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of scenarios; seeds run from --seed upward.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long, default_value_t = 4)]
    pub max_users: usize,
    #[arg(long, default_value_t = 8)]
    pub max_horizon: usize,
}

#[derive(Debug, Args)]
pub struct DumpLpArgs {
    /// Dump this agent's stand-alone problem instead.
    #[arg(long)]
    pub agent: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Clamped,
    Multiplier,
}

/// CoDES settings. Unset flags keep the scenario's `codes` block, or the
/// built-in defaults when the scenario has none.
#[derive(Debug, Clone, Default, Args)]
pub struct CodesArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    /// Primal step for both grid and storage variables.
    #[arg(long)]
    pub xi1: Option<f64>,
    #[arg(long)]
    pub xi1_grid: Option<f64>,
    #[arg(long)]
    pub xi1_desd: Option<f64>,
    #[arg(long)]
    pub xi2: Option<f64>,
    #[arg(long)]
    pub xi3: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_balance: Option<f64>,
    #[arg(long)]
    pub tol_step: Option<f64>,
    #[arg(long, value_enum)]
    pub energy_rule: Option<RuleArg>,
}

impl CodesArgs {
    pub fn resolve(&self, base: CodesConfig) -> CodesConfig {
        let mut cfg = base;
        if let Some(v) = self.xi1 {
            cfg.xi1_grid = v;
            cfg.xi1_desd = v;
        }
        let pairs = [
            (&mut cfg.rho, self.rho),
            (&mut cfg.xi1_grid, self.xi1_grid),
            (&mut cfg.xi1_desd, self.xi1_desd),
            (&mut cfg.xi2, self.xi2),
            (&mut cfg.xi3, self.xi3),
            (&mut cfg.tol_balance, self.tol_balance),
            (&mut cfg.tol_step, self.tol_step),
        ];
        for (slot, value) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
        }
        if let Some(rule) = self.energy_rule {
            cfg.energy_rule = match rule {
                RuleArg::Clamped => EnergyRule::Clamped,
                RuleArg::Multiplier => EnergyRule::Multiplier,
            };
        }
        cfg
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { exit, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(exit as u8)
        }
    }
}
