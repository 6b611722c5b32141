//! `fleetdispatch` command line.
//!
//! Results go to stdout as JSON and a one-line summary goes to stderr. Exit
//! status is 0 on success, 2 when the demand is infeasible (a witness is in
//! the output) and 1 on any error, including a failed cross-check.

mod check;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use commands::Outcome;

#[derive(Parser)]
#[command(name = "fleetdispatch", version, about = "Feasibility and dispatch for storage fleets with partial availability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dispatch,
    Subset,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the fleet can serve the scenario's demand.
    Feasible {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Dispatch)]
        method: Method,
        /// Slot width in hours for the subset check. Defaults to the coarsest
        /// grid the scenario sits on.
        #[arg(long)]
        slot_width: Option<f64>,
    },
    /// Build a dispatch schedule for the scenario.
    Dispatch {
        scenario: PathBuf,
        /// Also write the schedule here as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least unserved energy over admissible schedules.
    MinUnserved {
        scenario: PathBuf,
        /// Compare with the max-flow oracle.
        #[arg(long)]
        oracle_check: bool,
        /// Slot width in hours for the oracle.
        #[arg(long)]
        slot_width: Option<f64>,
    },
    /// Latest achievable first failure.
    MaxTtf {
        scenario: PathBuf,
        /// Compare with the max-flow oracle.
        #[arg(long)]
        oracle_check: bool,
        /// Slot width in hours for the oracle.
        #[arg(long)]
        slot_width: Option<f64>,
    },
    /// Time the fixed-point solve on generated fleets.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 250, 500])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Runs per size; the median is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Also write `N,seconds,iterations` rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare every verdict and optimum with the flow oracle on random
    /// grid-aligned instances.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        max_n: usize,
        #[arg(long, default_value_t = 8)]
        max_slots: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Flip every dispatch verdict, to see the check catch it.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// Caps the rayon pool at `FLEETDISPATCH_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FLEETDISPATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().with_context(|| format!("FLEETDISPATCH_THREADS={raw:?} is not a count"))?;
    if n == 0 {
        bail!("FLEETDISPATCH_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Feasible { scenario, method, slot_width } => commands::feasible(&scenario, method, slot_width),
        Command::Dispatch { scenario, out } => commands::dispatch(&scenario, out.as_deref()),
        Command::MinUnserved { scenario, oracle_check, slot_width } => {
            commands::min_unserved(&scenario, oracle_check, slot_width)
        }
        Command::MaxTtf { scenario, oracle_check, slot_width } => commands::max_ttf(&scenario, oracle_check, slot_width),
        Command::Bench { sizes, seed, repeats, csv } => commands::bench(&sizes, seed, repeats, csv.as_deref()),
        Command::OracleCheck { count, max_n, max_slots, seed, inject_fault } => {
            check::oracle_check(&check::CheckParams { count, max_n, max_slots, seed, inject_fault })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own usage errors exit with 2, which here means infeasible.
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.json).expect("JSON value serializes"));
            eprintln!("{}", out.summary);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
