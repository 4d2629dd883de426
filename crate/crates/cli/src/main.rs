//! Command-line front end.
//!
//! Exit codes are part of the contract:
//! `0` success · `1` configuration or usage error · `2` the requested
//! problem is infeasible everywhere · `3` the solver failed to converge.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use hyris::harness::{self, csvio, load_experiment, load_problem, HarnessError};
use hyris::inner::{self, InnerError, SolveStatus};

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hyris",
    version,
    about = "Wireless-powered hybrid-RIS uplink: energy allocation and mode selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one energy/time allocation instance from a TOML problem file.
    InnerSolve {
        /// TOML problem instance (see configs/problems/ for examples).
        #[arg(long)]
        config: PathBuf,
        /// Optional CSV destination for the per-user allocation.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the grid reference at this resolution and report both.
        #[arg(long)]
        check_resolution: Option<usize>,
    },
    /// Train one policy per seed from an experiment config (resumable).
    Train {
        /// TOML experiment config (see configs/ for examples).
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed (default: every seed in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's experiment.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep an axis: train per value and seed, then evaluate each policy
    /// greedily on a shared held-out channel set.
    Sweep {
        /// TOML experiment config with a [sweep] section.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's experiment.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate the scheme's whole mode menu on the held-out set and
    /// tabulate the best configuration against an all-idle baseline.
    Oracle {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's experiment.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate metrics and sweep CSVs into tidy report tables with
    /// median and interquartile range across seeds.
    Report {
        /// Output directory for the report CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Input CSV files (training metrics and/or sweep tables).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// A failure with its contractual exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_CONFIG, message: message.to_string() }
    }

    fn from_inner(err: InnerError) -> Self {
        let code = match err {
            InnerError::IterationCap { .. } => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        };
        Self { code, message: err.to_string() }
    }

    fn from_harness(err: HarnessError) -> Self {
        let code = if err.is_solver_failure() { EXIT_SOLVER } else { EXIT_CONFIG };
        Self { code, message: err.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::InnerSolve { config, out, check_resolution } => {
            inner_solve(&config, out.as_deref(), check_resolution)
        }
        Command::Train { config, seed, out } => train(&config, seed, out),
        Command::Sweep { config, out } => sweep(&config, out),
        Command::Oracle { config, out } => oracle(&config, out),
        Command::Report { out, inputs } => report(&inputs, &out),
    }
}

/// The experiment config plus the effective output directory (`--out`
/// wins over the config's `experiment.out_dir`).
fn load_run_setup(
    config_path: &std::path::Path,
    out: Option<PathBuf>,
) -> Result<(hyris::harness::ExperimentConfig, PathBuf), Failure> {
    let config = load_experiment(config_path).map_err(Failure::config)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.experiment.out_dir));
    Ok((config, out_dir))
}

fn train(
    config_path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (config, out_dir) = load_run_setup(config_path, out)?;
    let outcomes = match seed {
        Some(seed) => {
            vec![harness::run_train(&config, seed, &out_dir).map_err(Failure::from_harness)?]
        }
        None => harness::run_train_seeds(&config, &out_dir).map_err(Failure::from_harness)?,
    };
    for o in &outcomes {
        let note = if o.resumed_from >= o.iterations_completed {
            "already complete".to_string()
        } else if o.resumed_from > 0 {
            format!("resumed from {}", o.resumed_from)
        } else {
            "fresh".to_string()
        };
        println!(
            "seed {}: {} iterations ({note})\n  checkpoint {}\n  metrics    {}",
            o.seed,
            o.iterations_completed,
            o.checkpoint_path.display(),
            o.metrics_path.display()
        );
    }
    Ok(())
}

fn sweep(config_path: &std::path::Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let (config, out_dir) = load_run_setup(config_path, out)?;
    let outcome = harness::run_sweep(&config, &out_dir).map_err(Failure::from_harness)?;
    println!(
        "sweep table       {} ({} rows)",
        outcome.csv_path.display(),
        outcome.rows.len()
    );
    Ok(())
}

fn oracle(config_path: &std::path::Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let (config, out_dir) = load_run_setup(config_path, out)?;
    let outcome = harness::run_oracle(&config, &out_dir).map_err(Failure::from_harness)?;
    let feasible = outcome.rows.iter().filter(|r| r.feasible).count();
    println!("oracle table      {}", outcome.csv_path.display());
    println!("draws             {} ({feasible} feasible)", outcome.rows.len());
    if !outcome.any_feasible {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            message: "no feasible configuration on any held-out draw".into(),
        });
    }
    Ok(())
}

fn report(inputs: &[PathBuf], out: &std::path::Path) -> Result<(), Failure> {
    let outcome = harness::run_report(inputs, out).map_err(Failure::from_harness)?;
    for path in &outcome.written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn inner_solve(
    config: &std::path::Path,
    out: Option<&std::path::Path>,
    check_resolution: Option<usize>,
) -> Result<(), Failure> {
    let problem = load_problem(config).map_err(Failure::config)?;
    let started = Instant::now();
    let solution = inner::solve(&problem).map_err(Failure::from_inner)?;
    let elapsed = started.elapsed();

    match &solution.status {
        SolveStatus::Infeasible(reason) => Err(Failure {
            code: EXIT_INFEASIBLE,
            message: format!("instance is infeasible: {reason}"),
        }),
        SolveStatus::Optimal => {
            println!("status            optimal");
            println!("objective         {:.9e} J (max per-user energy)", solution.objective);
            println!("solve time        {:.3} ms", elapsed.as_secs_f64() * 1e3);
            println!("newton steps      {}", solution.newton_steps);
            let alloc = &solution.allocation;
            for j in 0..problem.n_users() {
                println!(
                    "user {j}: E1 {:.6e} J  E2 {:.6e} J  t1 {:.6e} s  t2 {:.6e} s  rate {:.6} bits/Hz",
                    alloc.e1[j], alloc.e2[j], alloc.t1[j], alloc.t2[j],
                    alloc.rate(&problem, j)
                );
            }
            if let Some(resolution) = check_resolution {
                let oracle = inner::oracle_grid(&problem, resolution).map_err(Failure::from_inner)?;
                match oracle.best {
                    Some(_) => println!(
                        "grid reference    {:.9e} J at resolution {resolution} ({} candidates)",
                        oracle.objective, oracle.candidates
                    ),
                    None => println!(
                        "grid reference    found no feasible point at resolution {resolution}"
                    ),
                }
            }
            if let Some(path) = out {
                csvio::write_allocation_csv(path, &problem, alloc)
                    .map_err(Failure::config)?;
                println!("allocation csv    {}", path.display());
            }
            Ok(())
        }
    }
}
