//! Command-line experiments: optimize policies, estimate rates, sweep channel
//! parameters and run the enumeration oracles.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "fscb", version, about = "Capacity bounds for finite-state channels with an input constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `mc.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Maximum number of grid points per bound.
    #[arg(long, global = true)]
    pub budget_grid: Option<u64>,
    /// Maximum number of policy candidates per grid point.
    #[arg(long, global = true)]
    pub budget_policy: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run value iteration for every configured bound and save the policies.
    Optimize,
    /// Estimate rates of saved policies.
    Evaluate {
        /// Policy files; defaults to those written by `optimize`.
        #[arg(long = "policy")]
        policies: Vec<PathBuf>,
    },
    /// Optimize and evaluate every bound over the sweep values.
    Sweep,
    /// Rate of the (1,1,1) bound against the grid step.
    QuantizerStudy,
    /// Exhaustive-enumeration identity checks on random small instances.
    OracleCheck {
        /// Also run a check that must fail, to exercise the failure path.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Describe the channel and the size of each configured optimization.
    Info,
}

impl Cli {
    /// Loads the configuration and applies command-line overrides.
    pub fn load_config(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.mc.seed = Some(seed);
        }
        if let Some(dir) = &self.out {
            cfg.output.dir = Some(dir.clone());
        }
        if let Some(b) = self.budget_grid {
            cfg.dp.grid_budget = Some(b);
        }
        if let Some(b) = self.budget_policy {
            cfg.dp.policy_budget = Some(b);
        }
        Ok(cfg)
    }
}

/// Runs a parsed command line inside a pool of the requested size. Progress
/// and summaries go to stdout, warnings to stderr.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::Invalid { field: "--threads".into(), message: "must be positive".into() }.into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::OracleCheck { inject_fault } = cli.command {
        let cfg = match &cli.config {
            Some(_) => cli.load_config()?,
            None => ExperimentConfig::default(),
        };
        let seed = cli.seed.or(cfg.mc.seed).unwrap_or(1);
        let report = commands::oracle_check(seed, &cli.out.clone().unwrap_or_else(|| cfg.output_dir()), inject_fault)?;
        print!("{}", report.to_table());
        return if report.passed() { Ok(()) } else { Err(CliError::OracleFailure) };
    }
    if cli.config.is_none() {
        return Err(ConfigError::Missing("--config").into());
    }
    let cfg = cli.load_config()?;
    let out = cfg.output_dir();
    match &cli.command {
        Command::Optimize => {
            for r in commands::optimize(&cfg, &out)? {
                println!(
                    "({},{},{}) sigma {:.6} span {:.2e} {} ms",
                    r.u.unwrap_or(0),
                    r.v.unwrap_or(0),
                    r.m.unwrap_or(0),
                    r.sigma_dp.unwrap_or(f64::NAN),
                    r.sigma_span.unwrap_or(f64::NAN),
                    r.wall_ms
                );
            }
        }
        Command::Evaluate { policies } => {
            for r in commands::evaluate(&cfg, &out, policies)? {
                print_rate(&r);
            }
        }
        Command::Sweep => {
            let (rows, warnings) = commands::sweep(&cfg, &out)?;
            rows.iter().for_each(print_rate);
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::QuantizerStudy => {
            for r in commands::quantizer_study(&cfg, &out)? {
                print_rate(&r);
            }
        }
        Command::Info => print!("{}", commands::info(&cfg)?),
        Command::OracleCheck { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn print_rate(r: &output::ResultRow) {
    let shape = match (r.u, r.v, r.m) {
        (Some(u), Some(v), Some(m)) => format!("({u},{v},{m})"),
        _ => "lower".to_string(),
    };
    println!(
        "{} eps_b {} {shape} rate {:.6} +- {:.6}",
        r.model,
        r.eps_b.map_or("-".to_string(), |e| e.to_string()),
        r.rate_bits.unwrap_or(f64::NAN),
        r.std_err.unwrap_or(f64::NAN)
    );
}
