//! `freegbdt`: generate synthetic suites, run and compare classification
//! heads, and emit the CSV artifacts of an experiment.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{parse_heads, parse_list, parse_seed_list, ExperimentConfig, Mode, Overrides};
use freegbdt::eval::WilcoxonPopulation;

#[derive(Parser, Debug)]
#[command(name = "freegbdt", version, about = "GBDT classification heads trained on fine-tuning features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic parent and child tasks as CSV files.
    GenSuite(Common),
    /// Fine-tune and evaluate every head once per (task, seed); keeps
    /// checkpoints, feature stores and ensembles.
    Run(Common),
    /// Multi-seed sweep with the aggregate report, Wilcoxon test and
    /// win/loss counts.
    Compare(Common),
    /// Dev accuracy of every head after each fine-tuning epoch.
    EpochsCurve(Common),
    /// Values of one feature dimension across fine-tuning and after it.
    Trace(Common),
    /// Wilcoxon signed-rank test of FreeGBDT against the MLP head from a
    /// results.csv file.
    Wilcoxon(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory. Defaults to $FREEGBDT_OUT/<command>.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seeds as `0..20`, `7` or `0,3,5`.
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    /// Heads to train, e.g. `mlp,free_gbdt`.
    #[arg(long, value_name = "LIST")]
    heads: Option<String>,
    /// Candidate boosting rounds, e.g. `1,10,20,30,40`.
    #[arg(long, value_name = "LIST")]
    rounds: Option<String>,
    /// Worker threads for the sweep.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
    /// Primary Wilcoxon population: `all-pairs` or `per-task-means`.
    #[arg(long, value_parser = parse_population, value_name = "MODE")]
    wilcoxon: Option<WilcoxonPopulation>,
    /// Suite directory written by gen-suite.
    #[arg(long, value_name = "DIR")]
    suite: Option<PathBuf>,
    /// Single task CSV (`label,f0,f1,...` plus a `split` column).
    #[arg(long, value_name = "PATH", conflicts_with = "suite")]
    dataset: Option<PathBuf>,
    /// results.csv to test (wilcoxon).
    #[arg(long, value_name = "PATH")]
    results: Option<PathBuf>,
    /// Child tasks to include, e.g. `cb,rte`.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    tasks: Option<Vec<String>>,
    /// Fine-tuning epochs.
    #[arg(long, value_name = "E")]
    epochs: Option<usize>,
    /// Feature dimension to trace.
    #[arg(long, value_name = "D")]
    dimension: Option<usize>,
    /// Record wall-clock seconds in results.csv (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

fn parse_population(s: &str) -> Result<WilcoxonPopulation, String> {
    WilcoxonPopulation::parse(s).map_err(|e| e.to_string())
}

fn parse_flag<T>(
    name: &str,
    value: Option<String>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, Failure> {
    value.map(|v| parse(&v).map_err(|e| Failure::Usage(anyhow::anyhow!("--{name}: {e}")))).transpose()
}

fn resolve(mode: Mode, c: Common) -> Result<(ExperimentConfig, bool), Failure> {
    let base = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::Usage)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        out: c.out,
        seeds: parse_flag("seeds", c.seeds, parse_seed_list)?,
        heads: parse_flag("heads", c.heads, parse_heads)?,
        rounds: parse_flag("rounds", c.rounds, parse_list::<usize>)?,
        workers: c.workers,
        wilcoxon: c.wilcoxon,
        suite: c.suite,
        dataset: c.dataset,
        results: c.results,
        tasks: c.tasks,
        epochs: c.epochs,
        dimension: c.dimension,
        timing: c.timing,
    };
    let config = base.resolve(mode, overrides).map_err(Failure::Usage)?;
    Ok((config, c.overwrite))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (mode, common) = match cli.command {
        Command::GenSuite(c) => (Mode::GenSuite, c),
        Command::Run(c) => (Mode::Run, c),
        Command::Compare(c) => (Mode::Compare, c),
        Command::EpochsCurve(c) => (Mode::EpochsCurve, c),
        Command::Trace(c) => (Mode::Trace, c),
        Command::Wilcoxon(c) => (Mode::Wilcoxon, c),
    };
    let outcome = resolve(mode, common).and_then(|(config, overwrite)| {
        log::info!("{} -> {}", mode.as_str(), config.output().display());
        commands::execute(config, overwrite)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
