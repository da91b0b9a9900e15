use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};

use freegbdt::data::{
    generate_synthetic_suite, load_dataset_csv, load_suite, write_feature_store, write_suite, CsvSchema,
};
use freegbdt::eval::report::{
    curve_csv, diffs_csv, read_results_csv, report_csv, results_csv, table_csv, trace_csv, win_loss_csv,
};
use freegbdt::eval::{
    compare_heads, drift_fraction, drift_summary, epoch_curve, feature_trace, monotone_drift_fraction, prepare_encoder,
    run_task_with_artifacts, ComparisonReport, RunFailure, SeedResult, SweepOptions,
};
use freegbdt::gbdt::io::save_ensemble;
use freegbdt::head::{extract_features_post, fine_tune_accumulate, ForwardCounter};
use freegbdt::nn::checkpoint::save_checkpoint;
use freegbdt::{HeadKind, TaskDataset};

use crate::config::{ExperimentConfig, Mode, CONFIG_FILE};

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs; nothing was computed.
    Usage(anyhow::Error),
    /// The computation itself failed, possibly after writing partial output.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn execute(config: ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    match config.mode.expect("resolved config has a mode") {
        Mode::GenSuite => gen_suite(&config, overwrite),
        Mode::Run => run(config, overwrite),
        Mode::Compare => compare(config, overwrite),
        Mode::EpochsCurve => curve(config, overwrite),
        Mode::Trace => trace(config, overwrite),
        Mode::Wilcoxon => wilcoxon(&config, overwrite),
    }
}

struct Inputs {
    parent: Option<TaskDataset>,
    tasks: Vec<TaskDataset>,
}

fn require_exists(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("{what} not found: {}", path.display())))
    }
}

/// Load the tasks named by the config and pin the encoder's input width to
/// the data.
fn load_inputs(config: &mut ExperimentConfig) -> Result<Inputs, Failure> {
    let (parent, mut tasks) = if let Some(path) = &config.dataset {
        require_exists(path, "dataset")?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("task").to_string();
        let task = load_dataset_csv(path, &CsvSchema::new(id)).usage()?;
        (None, vec![task])
    } else if let Some(dir) = &config.suite {
        require_exists(dir, "suite directory")?;
        let (parent, children) = load_suite(dir).with_context(|| format!("loading suite {}", dir.display())).usage()?;
        (Some(parent), children)
    } else {
        let suite = generate_synthetic_suite(&config.suite_spec).usage()?;
        (Some(suite.parent), suite.children)
    };
    if !config.tasks.is_empty() {
        for name in &config.tasks {
            if !tasks.iter().any(|t| &t.task_id == name) {
                let known: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
                return Err(Failure::Usage(anyhow!("unknown task `{name}`; available: {}", known.join(", "))));
            }
        }
        tasks.retain(|t| config.tasks.contains(&t.task_id));
    }
    let width = tasks[0].p();
    if let Some(bad) = tasks.iter().chain(parent.iter()).find(|t| t.p() != width) {
        return Err(Failure::Usage(anyhow!("task {} has {} features, expected {width}", bad.task_id, bad.p())));
    }
    if config.pipeline.encoder.input_dim != width {
        info!("encoder input_dim set to {width} to match the data");
        config.pipeline.encoder.input_dim = width;
    }
    Ok(Inputs { parent, tasks })
}

/// Create (or reuse, with `overwrite`) the output directory and record the
/// resolved config in it.
fn prepare_output(config: &ExperimentConfig, overwrite: bool) -> Result<PathBuf, Failure> {
    let dir = config.output().to_path_buf();
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Failure::Usage(anyhow!("{} exists and is not a directory", dir.display())));
        }
        let occupied = fs::read_dir(&dir).usage()?.next().is_some();
        if occupied && !overwrite {
            return Err(Failure::Usage(anyhow!(
                "output directory {} is not empty; pass --overwrite to reuse it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
    write_file(&dir, CONFIG_FILE, &config.to_json())?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display())).runtime()
}

fn failures_csv(failures: &[RunFailure]) -> String {
    let mut out = String::from("task_id,seed,message\n");
    for f in failures {
        out.push_str(&format!("{},{},\"{}\"\n", f.task_id, f.seed, f.message.replace('"', "'")));
    }
    out
}

fn gen_suite(config: &ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let spec = &config.suite_spec;
    let suite = generate_synthetic_suite(spec).usage()?;
    let dir = prepare_output(config, overwrite)?;
    write_suite(&suite, spec, &dir).runtime()?;
    println!("parent: {} rows, {} classes", suite.parent.n(), suite.parent.num_classes);
    for c in &suite.children {
        println!(
            "{}: train {} / dev {} / test {}, {} classes",
            c.task_id,
            c.train().len(),
            c.dev().len(),
            c.test().len(),
            c.num_classes
        );
    }
    println!("suite written to {}", dir.display());
    Ok(())
}

fn run(mut config: ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let inputs = load_inputs(&mut config)?;
    let dir = prepare_output(&config, overwrite)?;
    let mut results: Vec<SeedResult> = Vec::new();
    let mut failures = Vec::new();
    for &seed in config.seeds() {
        let encoder = match prepare_encoder(inputs.parent.as_ref(), &config.pipeline, seed) {
            Ok(e) => e,
            Err(e) => {
                for t in &inputs.tasks {
                    failures.push(RunFailure { task_id: t.task_id.clone(), seed, message: e.to_string() });
                }
                continue;
            }
        };
        for task in &inputs.tasks {
            match run_task_with_artifacts(&encoder, task, &config.pipeline, seed) {
                Ok((result, artifacts)) => {
                    let run_dir = dir.join("runs").join(&task.task_id).join(format!("seed-{seed}"));
                    fs::create_dir_all(&run_dir).runtime()?;
                    save_checkpoint(&artifacts.encoder, &run_dir.join("checkpoint.fgnn")).runtime()?;
                    if let Some(store) = &artifacts.during {
                        write_feature_store(store, &run_dir.join("during.fgfs")).runtime()?;
                    }
                    if let Some(store) = &artifacts.post {
                        write_feature_store(store, &run_dir.join("post.fgfs")).runtime()?;
                    }
                    if let Some(model) = &artifacts.standard_gbdt {
                        save_ensemble(model, &run_dir.join("standard_gbdt.fgbm")).runtime()?;
                    }
                    if let Some(model) = &artifacts.free_gbdt {
                        save_ensemble(model, &run_dir.join("free_gbdt.fgbm")).runtime()?;
                    }
                    results.push(result);
                }
                Err(e) => {
                    warn!("{} seed {seed} failed: {e}", task.task_id);
                    failures.push(RunFailure { task_id: task.task_id.clone(), seed, message: e.to_string() });
                }
            }
        }
    }
    results.sort_by(|a, b| (&a.task_id, a.seed).cmp(&(&b.task_id, b.seed)));
    write_file(&dir, "results.csv", &results_csv(&results, config.include_timing))?;
    for r in &results {
        for h in &r.heads {
            println!("{} seed {} {}: dev {:.4}", r.task_id, r.seed, h.head, h.dev_accuracy);
        }
    }
    if !failures.is_empty() {
        write_file(&dir, "failures.csv", &failures_csv(&failures))?;
        return Err(Failure::Runtime(anyhow!(
            "{} of {} runs failed; partial results in {}",
            failures.len(),
            failures.len() + results.len(),
            dir.display()
        )));
    }
    Ok(())
}

fn write_report(dir: &Path, report: &ComparisonReport, include_timing: bool) -> Result<(), Failure> {
    write_file(dir, "results.csv", &results_csv(&report.results, include_timing))?;
    write_file(dir, "report.csv", &report_csv(report))?;
    write_file(dir, "table.csv", &table_csv(report))?;
    write_file(dir, "diffs.csv", &diffs_csv(report))?;
    write_file(dir, "winloss.csv", &win_loss_csv(report))
}

fn print_wilcoxon(report: &ComparisonReport) {
    for block in &report.wilcoxon {
        let label = format!("{}{}", block.population.as_str(), if block.primary { " (primary)" } else { "" });
        match &block.outcome {
            Ok(w) => println!(
                "wilcoxon free_gbdt vs mlp, {label}: W+ {} W- {} n {} p {:.4e} [{}]",
                w.w_plus,
                w.w_minus,
                w.n_effective,
                w.p_two_sided,
                w.method.as_str()
            ),
            Err(e) => println!("wilcoxon free_gbdt vs mlp, {label}: {e}"),
        }
    }
}

fn compare(mut config: ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let inputs = load_inputs(&mut config)?;
    let dir = prepare_output(&config, overwrite)?;
    let options = SweepOptions { workers: config.workers, wilcoxon: config.wilcoxon };
    let report =
        compare_heads(inputs.parent.as_ref(), &inputs.tasks, config.seeds(), &config.pipeline, options).runtime()?;
    write_report(&dir, &report, config.include_timing)?;
    print!("{}", table_csv(&report));
    print_wilcoxon(&report);
    if !report.is_complete() {
        return Err(Failure::Runtime(anyhow!(
            "{} runs failed; the report in {} has gaps",
            report.failures.len(),
            dir.display()
        )));
    }
    Ok(())
}

fn curve(mut config: ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let inputs = load_inputs(&mut config)?;
    let dir = prepare_output(&config, overwrite)?;
    for &seed in config.seeds() {
        let encoder = prepare_encoder(inputs.parent.as_ref(), &config.pipeline, seed).runtime()?;
        for task in &inputs.tasks {
            let points = epoch_curve(&encoder, task, &config.pipeline, seed).runtime()?;
            let name = format!("curve_{}_seed{seed}.csv", task.task_id);
            write_file(&dir, &name, &curve_csv(&points))?;
            println!("{}: {} epochs -> {}", task.task_id, points.len(), name);
        }
    }
    Ok(())
}

fn trace(mut config: ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let inputs = load_inputs(&mut config)?;
    let dim = config.trace_dimension;
    if dim >= config.pipeline.encoder.feature_dim {
        return Err(Failure::Usage(anyhow!(
            "trace dimension {dim} is out of range for {} features",
            config.pipeline.encoder.feature_dim
        )));
    }
    let dir = prepare_output(&config, overwrite)?;
    let mut drift = String::from("task_id,seed,dimension,epoch,during_mean,post_mean\n");
    for &seed in config.seeds() {
        let encoder = prepare_encoder(inputs.parent.as_ref(), &config.pipeline, seed).runtime()?;
        for task in &inputs.tasks {
            let train = task.train();
            let mut state = encoder.clone();
            state.reset_head(task.num_classes).runtime()?;
            let (store, _) = fine_tune_accumulate(&mut state, &train, &config.pipeline.fine_tune).runtime()?;
            let post = extract_features_post(&state, &train, &mut ForwardCounter::default()).runtime()?;
            let rows = feature_trace(&store, &post, dim).runtime()?;
            write_file(&dir, &format!("trace_{}_seed{seed}.csv", task.task_id), &trace_csv(&rows))?;
            let summary = drift_summary(&store, &post, dim).runtime()?;
            for (e, m) in summary.epoch_means.iter().enumerate() {
                drift.push_str(&format!("{},{seed},{dim},{},{m:?},{:?}\n", task.task_id, e + 1, summary.post_mean));
            }
            let monotone = monotone_drift_fraction(&store, &post).runtime()?;
            let trending = drift_fraction(&store, &post).runtime()?;
            let trend = summary.trend().map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"));
            println!(
                "{} seed {seed}: dimension {dim} rank trend {trend} ({}); dimensions trending toward post {:.1}%, monotone {:.1}%",
                task.task_id,
                if summary.drifts_toward_post() { "toward post" } else { "not toward post" },
                100.0 * trending,
                100.0 * monotone
            );
        }
    }
    write_file(&dir, "drift.csv", &drift)
}

fn wilcoxon(config: &ExperimentConfig, overwrite: bool) -> Result<(), Failure> {
    let path = config.results.as_deref().expect("resolved wilcoxon config has a results path");
    require_exists(path, "results file")?;
    let results = read_results_csv(path).usage()?;
    if results.is_empty() {
        return Err(Failure::Usage(anyhow!("{} holds no results", path.display())));
    }
    let mut tasks: Vec<String> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    let mut heads: Vec<HeadKind> = Vec::new();
    for r in &results {
        if !tasks.contains(&r.task_id) {
            tasks.push(r.task_id.clone());
        }
        seeds.push(r.seed);
        heads.extend(r.heads.iter().map(|h| h.head));
    }
    seeds.sort_unstable();
    seeds.dedup();
    heads.sort_unstable();
    heads.dedup();
    for needed in [HeadKind::Mlp, HeadKind::FreeGbdt] {
        if !heads.contains(&needed) {
            return Err(Failure::Usage(anyhow!("{} has no {needed} rows", path.display())));
        }
    }
    let report = ComparisonReport::aggregate(tasks, seeds, heads, results, Vec::new(), config.wilcoxon);
    let dir = prepare_output(config, overwrite)?;
    write_file(&dir, "report.csv", &report_csv(&report))?;
    write_file(&dir, "diffs.csv", &diffs_csv(&report))?;
    print_wilcoxon(&report);
    let primary = report.wilcoxon.iter().find(|b| b.primary).expect("a primary Wilcoxon block");
    match &primary.outcome {
        Ok(_) => Ok(()),
        Err(e) => Err(Failure::Runtime(anyhow!("{e}"))),
    }
}
