//! `dlsched` command-line front end.
//!
//! Exit codes: 0 on success, 1 when `oracle-check` finds a state outside
//! tolerance, 2 for configuration or usage errors, 3 for runtime errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlsched::experiment::{load_config, run_experiment, ExperimentError, ExperimentSpec};
use dlsched::oracle::{check_policy, CheckSpec};
use dlsched::PolicyKind;

#[derive(Parser)]
#[command(name = "dlsched", about = "Mixed RT/NRT downlink scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the base configuration (any sweep table is ignored).
    Run(RunArgs),
    /// Simulate every point of the configured sweep.
    Sweep(RunArgs),
    /// Compare the closed-form policy against exhaustive search on random states.
    OracleCheck(OracleArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of slots per run.
    #[arg(long)]
    horizon: Option<u64>,
    /// Run only this policy (algorithm1 or fixedp).
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    states: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Log-spaced power grid size.
    #[arg(long, default_value_t = 400)]
    grid_points: usize,
    /// Write per-state CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => simulate(args, false),
        Command::Sweep(args) => simulate(args, true),
        Command::OracleCheck(args) => oracle_check(args),
        Command::Version => {
            println!("dlsched {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn simulate(args: RunArgs, sweep: bool) -> Result<(), Failure> {
    let mut spec = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentSpec::default(),
    };
    if sweep && spec.sweep.is_none() {
        return Err(Failure::Config(
            "the configuration has no [experiment.sweep] table".into(),
        ));
    }
    if !sweep {
        spec.sweep = None;
    }
    if let Some(seed) = args.seed {
        spec.base.rng_seed = seed;
    }
    if let Some(k) = args.horizon {
        spec.base.horizon_slots = k;
    }
    if let Some(policy) = args.policy {
        spec.policies = vec![policy];
    }
    let table = run_experiment(&spec, args.jobs)?;
    emit(args.out.as_ref(), &table.to_csv())
}

fn oracle_check(args: OracleArgs) -> Result<(), Failure> {
    let mut spec = CheckSpec {
        states: args.states,
        seed: args.seed,
        ..Default::default()
    };
    spec.grid.power_points = args.grid_points;
    let outcomes = check_policy(&spec).map_err(|e| Failure::Runtime(e.to_string()))?;

    if let Some(path) = &args.out {
        let mut csv =
            String::from("state,n_rt,n_nrt,x,policy_objective,oracle_objective,tolerance,passed\n");
        for o in &outcomes {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                o.index,
                o.n_rt,
                o.n_nrt,
                o.x,
                o.policy_objective,
                o.oracle_objective,
                o.tolerance(),
                o.passed()
            ));
        }
        emit(Some(path), &csv)?;
    }

    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed()).collect();
    let worst = outcomes
        .iter()
        .map(|o| o.shortfall() / o.oracle_objective.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    println!(
        "{} states, {} outside tolerance, worst relative shortfall {worst:.4}",
        outcomes.len(),
        failed.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "first failing state: {}",
            failed[0].index
        )))
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    let result = match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| format!("cannot write output: {e}")),
    };
    result.map_err(Failure::Runtime)
}
