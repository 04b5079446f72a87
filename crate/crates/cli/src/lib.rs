//! Scenario generation, reconstruction runs and sweeps behind the
//! `elastorecon` binary.

pub mod commands;
pub mod error;
pub mod noise;
pub mod scenario;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use elastorecon::recon::{Method, TauMethod};

pub use error::{CliError, Result};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Nullspace,
    Crossprod,
    Auto,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TauArg {
    Path,
    Poisson,
}

#[derive(Debug, Parser)]
#[command(name = "elastorecon", version, about = "Elasticity tensor reconstruction from internal strain data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario JSON; a constant near-identity scenario when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true, value_enum)]
    pub tau: Option<TauArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Relative noise amplitude.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Nodes per axis.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Worker threads (all cores when omitted).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory with strain files for `recon` and `check`.
    #[arg(long, global = true)]
    pub inputs: Option<PathBuf>,
    /// Perturb displacements and re-differentiate instead of perturbing strains.
    #[arg(long, global = true)]
    pub displacement_noise: bool,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Sample the polynomial solutions (forward solves for variable stiffness).
    Gen,
    /// Forward-solve every field with polynomial boundary data.
    Solve,
    /// Reconstruct c̃, τ and div C and write recon_report.json.
    Recon,
    /// Validate the scenario and print stability and rank diagnostics.
    Check,
    /// Run the configured sweep and write bench.csv.
    Bench,
}

impl Cli {
    pub fn overrides(&self) -> commands::Overrides {
        commands::Overrides {
            method: self.method.map(|m| match m {
                MethodArg::Nullspace => Method::Nullspace,
                MethodArg::Crossprod => Method::Crossprod,
                MethodArg::Auto => Method::Auto,
            }),
            tau: self.tau.map(|t| match t {
                TauArg::Path => TauMethod::Path,
                TauArg::Poisson => TauMethod::Poisson,
            }),
            seed: self.seed,
            eta: self.eta,
            grid: self.grid,
            inputs: self.inputs.clone(),
            displacement_noise: self.displacement_noise,
        }
    }
}

/// Executes one parsed command line; the summary goes to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // ignore the error when a pool already exists (repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let s = commands::load_scenario(cli.config.as_deref(), &cli.overrides())?;
    let out = &cli.out;
    match cli.command {
        Command::Gen | Command::Solve => {
            let d = if matches!(cli.command, Command::Gen) {
                commands::cmd_gen(&s, out)?
            } else {
                commands::cmd_solve(&s, out)?
            };
            println!("wrote {} fields to {}", d.strains.len(), out.display());
            for st in &d.solves {
                println!(
                    "field {:02}: {} iterations, relative residual {:e}",
                    st.field + 1,
                    st.iterations,
                    st.relative_residual
                );
            }
        }
        Command::Recon => {
            let res = commands::cmd_recon(&s, out);
            let text = std::fs::read_to_string(out.join(commands::REPORT_FILE));
            if let Ok(t) = text {
                println!("{t}");
            }
            res?;
        }
        Command::Check => {
            let r = commands::cmd_check(&s)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Bench => {
            let rows = commands::cmd_bench(&s, out)?;
            println!("wrote {} rows to {}", rows.len(), out.join(commands::BENCH_FILE).display());
        }
    }
    Ok(())
}
