use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cqhpo_cli::{cmd_aggregate, cmd_calibrate, cmd_run, cmd_stratify, AggregateOptions, CliError, RunOptions, StratifyOptions, WORKERS_ENV};
use cqhpo_harness::{BudgetAxis, Screen};

#[derive(Parser)]
#[command(name = "cqhpo", version, about = "Conformalized quantile-regression hyperparameter optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (benchmark, algorithm, seed) study of a manifest.
    Run {
        manifest: PathBuf,
        /// Parallel studies; defaults to the number of cores.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Skip studies whose result file is complete.
        #[arg(long)]
        resume: bool,
    },
    /// Compare the standard conformal variants on greedy runs.
    Calibrate {
        manifest: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Rank benchmark tables by a screen and write a manifest of the top ones.
    Stratify {
        #[arg(required = true)]
        benchmarks: Vec<PathBuf>,
        #[arg(long, value_enum)]
        screen: ScreenArg,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short, default_value = "stratified.toml")]
        output: PathBuf,
    },
    /// Rank paths, bootstrap bands and pairwise tests for a results directory.
    Aggregate {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "iteration")]
        axis: AxisArg,
        /// Also write BH-adjusted pairwise Wilcoxon p-values.
        #[arg(long)]
        wilcoxon: bool,
        #[arg(long, default_value_t = 2000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Count only objective runtimes on the runtime axis, leaving out
        /// the optimizer's own wallclock.
        #[arg(long)]
        no_overhead: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScreenArg {
    Size,
    Hetero,
    Asym,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Iteration,
    Runtime,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { manifest, workers, resume } => {
            let workers = workers.unwrap_or_else(cqhpo_cli::default_workers);
            let s = cmd_run(&manifest, RunOptions { workers, resume })?;
            println!("{} studies run, {} already complete", s.completed.len(), s.skipped.len());
        }
        Command::Calibrate { manifest, workers } => {
            let s = cmd_calibrate(&manifest, workers.unwrap_or_else(cqhpo_cli::default_workers))?;
            for (metric, ranks) in &s.ranks {
                println!("{metric}:");
                for r in ranks {
                    println!("  {:<16} {:.3}  [{:.3}, {:.3}]", r.variant, r.mean_rank, r.ci_lo, r.ci_hi);
                }
            }
            println!("wrote {}", s.output_dir.display());
        }
        Command::Stratify { benchmarks, screen, top, seed, output } => {
            let screen = match screen {
                ScreenArg::Size => Screen::Size,
                ScreenArg::Hetero => Screen::Hetero,
                ScreenArg::Asym => Screen::Asym,
            };
            let rows = cmd_stratify(&benchmarks, &StratifyOptions { screen, top, seed, output: output.clone() })?;
            for (i, r) in rows.iter().enumerate() {
                println!("{:>3}  {:<32} {:.6}", i + 1, r.name, r.score);
            }
            println!("wrote {}", output.display());
        }
        Command::Aggregate { dir, axis, wilcoxon, n_boot, seed, no_overhead } => {
            let axis = match axis {
                AxisArg::Iteration => BudgetAxis::Iteration,
                AxisArg::Runtime => BudgetAxis::Runtime,
            };
            let s = cmd_aggregate(&dir, &AggregateOptions { axis, wilcoxon, n_boot, seed, with_overhead: !no_overhead, ..AggregateOptions::default() })?;
            let last = s.path.budget.len().saturating_sub(1);
            for (a, alg) in s.path.algorithms.iter().enumerate() {
                println!("{alg:<24} final mean rank {:.3}", s.path.mean_rank[a][last]);
            }
            for p in &s.written {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
