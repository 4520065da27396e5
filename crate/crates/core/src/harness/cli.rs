use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::extremal_distributions;
use crate::error::{Error, Result};
use crate::planner::{plan, OnInfeasible, Policy};

use super::scenario::{db_to_linear, ClusterParams, Scenario};
use super::sweep::{default_bound_grid, sweep_antennas, sweep_rotation, sweep_sectors, validate_bounds};
use super::PlanDocument;

const THREADS_VAR: &str = "FLEXSECTOR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "flexsector", version, about = "Flexible-sector base station planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    Dist1,
    Dist2,
}

fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print one of the built-in scenarios as JSON.
    GenScenario {
        #[arg(value_enum)]
        kind: Builtin,
        #[arg(long)]
        seed: Option<u64>,
        /// Expected users per zone inside the cluster of `dist2`.
        #[arg(long, default_value_t = 4.0)]
        dist2_cluster_weight: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one scenario (`-` reads standard input).
    Optimize {
        scenario: String,
        #[arg(long, default_value = "flexible", value_parser = parse_policy)]
        policy: Policy,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit a plan flagged infeasible instead of failing.
        #[arg(long)]
        allow_infeasible: bool,
    },
    /// Sum rate versus rotation index, one table per sector count.
    SweepZ0 {
        scenario: String,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 5, 6, 10, 15, 30])]
        sectors: Vec<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sum rate of each policy versus the antenna budget.
    SweepN {
        scenario: String,
        #[arg(long, value_delimiter = ',', default_values_t = (60..=160).step_by(10).collect::<Vec<u32>>())]
        antennas: Vec<u32>,
        #[arg(long, value_delimiter = ',', value_parser = parse_policy,
              default_values = ["flexible", "alloc-only", "rotation-only", "fixed"])]
        policies: Vec<Policy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sum rate of each policy versus the sector count.
    SweepB {
        scenario: String,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 5, 6, 10, 15, 30])]
        sectors: Vec<u32>,
        #[arg(long, value_delimiter = ',', value_parser = parse_policy,
              default_values = ["flexible", "alloc-only", "rotation-only", "fixed"])]
        policies: Vec<Policy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo check of the ZF rate bounds on the standard grid.
    ValidateBounds {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best and worst user placements for a cell.
    AnalyzeExtremal {
        #[arg(long, default_value_t = 50)]
        users: u64,
        #[arg(long, default_value_t = 3)]
        sectors: u32,
        #[arg(long, default_value_t = 90)]
        antennas: u32,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        snr0_db: f64,
    },
}

fn load_scenario(path: &str, input: &mut dyn Read) -> Result<Scenario> {
    let text = if path == "-" {
        let mut s = String::new();
        input.read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{path}: {e}"))))?
    };
    Scenario::from_json(&text)
}

fn emit(text: &str, out: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(command: Command, input: &mut dyn Read, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenScenario {
            kind,
            seed,
            dist2_cluster_weight,
            out,
        } => {
            let mut s = match kind {
                Builtin::Dist1 => Scenario::quasi_uniform(),
                Builtin::Dist2 => Scenario::clustered(ClusterParams {
                    users_per_cluster_zone: dist2_cluster_weight,
                    ..ClusterParams::default()
                })?,
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            emit(&s.to_json(), out.as_ref(), stdout)
        }
        Command::Optimize {
            scenario,
            policy,
            out,
            allow_infeasible,
        } => {
            let s = load_scenario(&scenario, input)?;
            let (cfg, profile) = s.validate()?;
            let mode = if allow_infeasible {
                OnInfeasible::Relax
            } else {
                OnInfeasible::Reject
            };
            let p = plan(policy, &cfg, &profile, mode)?;
            emit(&PlanDocument::new(&s, p).to_json(), out.as_ref(), stdout)
        }
        Command::SweepZ0 { scenario, sectors, out } => {
            let s = load_scenario(&scenario, input)?;
            let mut text = String::new();
            for b in sectors {
                text.push_str(&sweep_rotation(&s, b)?.to_csv());
            }
            emit(&text, out.as_ref(), stdout)
        }
        Command::SweepN {
            scenario,
            antennas,
            policies,
            out,
        } => {
            let s = load_scenario(&scenario, input)?;
            emit(&sweep_antennas(&s, &policies, &antennas)?.to_csv(), out.as_ref(), stdout)
        }
        Command::SweepB {
            scenario,
            sectors,
            policies,
            out,
        } => {
            let s = load_scenario(&scenario, input)?;
            emit(&sweep_sectors(&s, &policies, &sectors)?.to_csv(), out.as_ref(), stdout)
        }
        Command::ValidateBounds { trials, seed, out } => {
            let report = validate_bounds(&default_bound_grid(), trials, seed)?;
            emit(&report.to_csv(), out.as_ref(), stdout)
        }
        Command::AnalyzeExtremal {
            users,
            sectors,
            antennas,
            snr0_db,
        } => {
            let ext = extremal_distributions(users, sectors, antennas as f64, db_to_linear(snr0_db))?;
            let mut text = serde_json::to_string_pretty(&ext)?;
            text.push('\n');
            emit(&text, None, stdout)
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code: 0 on success, 2 for bad input, 3 for infeasible
/// instances, 4 for numerical failures.
pub fn run<I, T>(args: I, input: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, input, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "flexsector: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::domain(format!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    // A pool built earlier in the process wins; that is fine for the binary.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Entry point for the `flexsector` binary.
pub fn cli_main() -> i32 {
    if let Err(e) = configure_threads() {
        eprintln!("flexsector: {e}");
        return e.exit_code();
    }
    run(
        std::env::args_os(),
        &mut io::stdin().lock(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    )
}
