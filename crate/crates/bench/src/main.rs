use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eldt_bench::compare::{compare, read_campaign};
use eldt_bench::output::write_outputs;
use eldt_bench::{run_experiment, Algorithm, BenchError, ExperimentConfig, Problem};
use eldt_core::datagen::{self, HfsVariant};

#[derive(Parser)]
#[command(name = "bench", version, about = "Run, compare and generate data for tree-policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm for several seeds and write CSV/DOT artifacts.
    Run(RunArgs),
    /// Pairwise rank-sum tests between campaign directories.
    Compare(CompareArgs),
    /// Generate a synthetic dataset.
    Datagen(DatagenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<Problem>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    machine_types: Option<PathBuf>,
    #[arg(long)]
    transport_days: Option<f64>,
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Campaign directories written by `bench run`.
    #[arg(long = "in", required = true, num_args = 1..)]
    dirs: Vec<PathBuf>,
    /// Write the matrix here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    problem: Problem,
    /// d1..d4 (flow shop only).
    #[arg(long, default_value = "d1")]
    variant: HfsVariant,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> BenchError {
    BenchError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig, BenchError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)?,
        None => {
            let missing = |flag: &str| BenchError::Config(format!("--{flag} is required without --config"));
            ExperimentConfig::new(
                args.problem.ok_or_else(|| missing("problem"))?,
                args.algo.ok_or_else(|| missing("algo"))?,
                args.dataset.clone().ok_or_else(|| missing("dataset"))?,
            )
        }
    };
    if let Some(p) = args.problem {
        config.problem = p;
    }
    if let Some(a) = args.algo {
        config.algorithm = a;
    }
    if let Some(d) = &args.dataset {
        config.dataset = d.clone();
    }
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.params.is_some() {
        config.params = args.params.clone();
    }
    if args.machine_types.is_some() {
        config.machine_types = args.machine_types.clone();
    }
    if args.transport_days.is_some() {
        config.transport_days = args.transport_days;
    }
    if args.grammar.is_some() {
        config.grammar = args.grammar.clone();
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run(args) => {
            let config = resolve(&args)?;
            let exp = run_experiment(&config, args.threads)?;
            write_outputs(&args.out, &exp)?;
            let (mean, std) = eldt_bench::stats::aggregate(&exp.objectives())?;
            println!("{} on {}: {} runs, mean {mean}, std {std}", config.algorithm, config.problem, exp.records.len());
        }
        Command::Compare(args) => {
            let campaigns = args.dirs.iter().map(|d| read_campaign(d)).collect::<Result<Vec<_>, _>>()?;
            let table = compare(&campaigns)?;
            match &args.out {
                Some(path) => fs::write(path, &table).map_err(|e| io_err(path, e))?,
                None => print!("{table}"),
            }
        }
        Command::Datagen(args) => match args.problem {
            Problem::Makeorbuy => datagen::save_orders(&args.out, &datagen::gen_makeorbuy(args.n, args.seed))?,
            Problem::Hfs => datagen::save_jobs(&args.out, &datagen::gen_hfs_jobs(args.variant, args.n, args.seed))?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
