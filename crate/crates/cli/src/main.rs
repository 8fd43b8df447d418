//! `r2x`: run scenario files, compare result directories, validate inputs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use r2x_core::report::{compare, format_ranking, write_results};
use r2x_core::scenario::{sort_records, Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "r2x", version, about = "Closed-loop robot/radio scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) pair of a scenario and write results.jsonl and summary.csv
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; overrides R2X_SEED and the file
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated subset of methods
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Worker threads; 1 runs sequentially
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Rank methods across result directories by the median of a metric
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "completion_time_s")]
        metric: String,
    },
    /// Parse and validate a scenario without running it
    Validate { scenario: PathBuf },
}

/// Failure classes mapped to exit codes 2 and 1.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn env_seeds() -> Result<Option<Vec<u64>>> {
    match std::env::var("R2X_SEED") {
        Ok(v) if !v.trim().is_empty() => {
            let seeds = v
                .split(',')
                .map(|s| s.trim().parse::<u64>().with_context(|| format!("R2X_SEED: bad seed {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(seeds))
        }
        _ => Ok(None),
    }
}

fn run(
    path: PathBuf,
    out: PathBuf,
    seeds: Option<Vec<u64>>,
    methods: Option<Vec<String>>,
    parallel: usize,
) -> Result<(), Failure> {
    let scenario = Scenario::load(&path)?;
    let seeds = match seeds {
        Some(s) => s,
        None => env_seeds().map_err(Failure::Validation)?.unwrap_or_else(|| scenario.seeds().to_vec()),
    };
    if seeds.is_empty() {
        return Err(Failure::Validation(anyhow::anyhow!("no seeds to run")));
    }
    let methods = methods.unwrap_or_else(|| scenario.methods().to_vec());
    scenario.check_methods(&methods)?;

    let jobs: Vec<(&str, u64)> = methods.iter().flat_map(|m| seeds.iter().map(move |s| (m.as_str(), *s))).collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(parallel.max(1)).build().map_err(|e| Failure::Runtime(e.into()))?;
    let results: Vec<_> = pool.install(|| jobs.par_iter().map(|(m, s)| scenario.run_one(m, *s)).collect());
    let mut records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    sort_records(&mut records);
    write_results(&out, &mut records)
        .with_context(|| format!("writing results to {}", out.display()))
        .map_err(Failure::Runtime)?;
    eprintln!("{}: {} runs written to {}", scenario.id(), records.len(), out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, out, seeds, methods, parallel } => run(scenario, out, seeds, methods, parallel),
        Command::Compare { dirs, metric } => {
            let (id, rows) = compare(&dirs, &metric).map_err(|e| Failure::Runtime(e.into()))?;
            print!("{}", format_ranking(&id, &metric, &rows));
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!(
                "{}: ok ({} scenario, {} methods, {} seeds)",
                s.id(),
                s.kind(),
                s.methods().len(),
                s.seeds().len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
