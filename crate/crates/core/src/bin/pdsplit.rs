use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pdsplit::bench::{self, BenchProblem, BenchSpec, Graph, RunRecord};
use pdsplit::certify::{self, CheckResult, Suite};
use pdsplit::Error;

#[derive(Parser)]
#[command(name = "pdsplit", version, about = "Primal-dual proximal splitting solvers and their certification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (solver, estimator, seed) of a benchmark config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search stepsizes for a benchmark config with a `grid` section.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the certification checks and print a pass/fail table.
    Certify {
        #[arg(long, default_value = "all", value_parser = parse_suite)]
        suite: Suite,
        /// Only checks whose name contains this string.
        #[arg(long)]
        check: Option<String>,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// List check names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Write a synthetic problem instance to disk.
    GenData {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        /// Primal dimension (block dimension for the decentralized problem).
        #[arg(long)]
        p: usize,
        /// Sample count (node count for the decentralized problem).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ProblemArg {
    FusedLasso,
    GroupLassoLogistic,
    PcaLasso,
    DecentralizedQuadratic,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::StepsizeCondition(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::StochasticCondatVu
            | Error::DisconnectedGraph
            | Error::Parse { .. }
            | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load_bench(path: &Path) -> Result<BenchSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn print_records(records: &[RunRecord]) {
    println!("{:<14} {:<10} {:>6} {:>12} {:>12} {:>14} {:>11}", "solver", "estimator", "seed", "gamma", "tau", "objective", "kkt");
    for r in records {
        let obj = r.final_objective.map_or("-".into(), |o| format!("{o:.8e}"));
        let flag = match (&r.diverged, r.out_of_theorem) {
            (Some(d), _) => format!("  diverged: {d}"),
            (None, true) => "  out of theorem".into(),
            _ => String::new(),
        };
        println!(
            "{:<14} {:<10} {:>6} {:>12.4e} {:>12.4e} {:>14} {:>11.3e}{flag}",
            r.solver.name(),
            r.estimator.name(),
            r.seed,
            r.gamma,
            r.tau,
            obj,
            r.final_kkt.0.max(r.final_kkt.1)
        );
    }
}

fn print_check(r: &CheckResult) {
    let crit = r.criterion.map_or("  ".into(), |c| format!("{c:>2}"));
    let status = if r.passed { "PASS" } else { "FAIL" };
    println!("[{status}] {crit} {:<15} {:<24} {:>8} ms  {}", r.suite.name(), r.name, r.elapsed_ms, r.detail);
}

fn execute(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Run { config, out } => {
            let spec = load_bench(&config)?;
            let records = bench::run_bench(&spec, Some(&out))?;
            print_records(&records);
            println!("wrote {} traces and summary.json to {}", records.len(), out.display());
            Ok(records.iter().all(|r| r.diverged.is_none()))
        }
        Command::Grid { config, out } => {
            let spec = load_bench(&config)?;
            if spec.grid.is_none() {
                return Err(Failure::Config(format!("{}: no `grid` section", config.display())));
            }
            let best = bench::grid_search(&spec, Some(&out))?;
            print_records(&best);
            Ok(true)
        }
        Command::Certify { suite, check, json, list } => {
            if list {
                for name in certify::check_names() {
                    println!("{name}");
                }
                return Ok(true);
            }
            let results = certify::run_suite_with(suite, check.as_deref(), print_check);
            if results.is_empty() {
                return Err(Failure::Config("no check matches the selection".into()));
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {} passed, {failed} failed", results.len(), results.len() - failed);
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&results).map_err(|e| Failure::Run(e.to_string()))?;
                fs::write(&path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
            }
            Ok(failed == 0)
        }
        Command::GenData { problem, p, n, seed, lambda, lambda1, out } => {
            let problem = match problem {
                ProblemArg::FusedLasso => BenchProblem::FusedLasso {
                    n,
                    p,
                    seed,
                    lambda: lambda.unwrap_or(0.1),
                    lambda1: lambda1.unwrap_or(5.0),
                },
                ProblemArg::GroupLassoLogistic => BenchProblem::GroupLassoLogistic {
                    n,
                    p,
                    groups: None,
                    lambda: lambda.unwrap_or(1e-3),
                    lambda1: lambda1.unwrap_or(1e-2),
                    seed,
                },
                ProblemArg::PcaLasso => {
                    BenchProblem::PcaLasso { n, p, m: 5, rows_per_block: p.div_ceil(5), lambda, lambda1, seed }
                }
                ProblemArg::DecentralizedQuadratic => {
                    BenchProblem::DecentralizedQuadratic { nodes: n, graph: Graph::Ring, d: p, seed, ridge: lambda.unwrap_or(0.1) }
                }
            };
            let generated = bench::write_generated(&problem, &out)?;
            println!(
                "{} written to {} (ν = {:.6e}, {} datasets, {} matrices)",
                problem.name(),
                out.display(),
                generated.nu,
                generated.datasets.len(),
                generated.matrices.len()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
