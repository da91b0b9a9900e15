//! Per-(task, seed) pipeline runs and the multi-seed head comparison.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, mean_std};
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::data::{SplitData, TaskDataset};
use crate::error::{invalid, Error, Result};
use crate::gbdt::{Ensemble, GbdtParams};
use crate::head::training::encode;
use crate::head::{
    extract_features_post, select_rounds_on_features, FeatureStore, FineTuneSession, ForwardCounter, HeadKind,
    DEFAULT_ROUND_CANDIDATES,
};
use crate::nn::{pretrain, EncoderConfig, ModelState, TrainConfig};

/// Everything a single pipeline run needs besides the data and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// `num_classes` and `seed` are overridden per run.
    pub encoder: EncoderConfig,
    /// Intermediate pretraining on the parent task; zero epochs skips it.
    pub pretrain: TrainConfig,
    pub fine_tune: TrainConfig,
    pub gbdt: GbdtParams,
    pub round_candidates: Vec<usize>,
    pub heads: Vec<HeadKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            pretrain: TrainConfig { epochs: 3, ..TrainConfig::default() },
            fine_tune: TrainConfig::default(),
            gbdt: GbdtParams::default(),
            round_candidates: DEFAULT_ROUND_CANDIDATES.to_vec(),
            heads: HeadKind::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.fine_tune.validate()?;
        if self.fine_tune.epochs == 0 {
            return Err(invalid("fine_tune.epochs must be at least 1"));
        }
        self.gbdt.validate()?;
        if self.round_candidates.is_empty() || self.round_candidates.contains(&0) {
            return Err(invalid("round_candidates must be a nonempty set of positive integers"));
        }
        if self.heads.is_empty() {
            return Err(invalid("at least one head must be selected"));
        }
        Ok(())
    }

    pub fn runs(&self, head: HeadKind) -> bool {
        self.heads.contains(&head)
    }
}

/// Encoder for one seed: pretrained on `parent` when given and enabled,
/// otherwise freshly initialized. Its head still has the parent's classes;
/// [`run_task`] swaps in a task head.
pub fn prepare_encoder(parent: Option<&TaskDataset>, config: &PipelineConfig, seed: u64) -> Result<ModelState> {
    let classes = parent.map_or(config.encoder.num_classes, |p| p.num_classes);
    let mut state = ModelState::new(EncoderConfig { num_classes: classes, seed, ..config.encoder.clone() })?;
    if let Some(parent) = parent.filter(|_| config.pretrain.epochs > 0) {
        let train = parent.train();
        let report = pretrain(&mut state, train.inputs.view(), &train.labels, &config.pretrain)?;
        info!(
            "seed {seed}: pretrained on {} ({} rows), loss {:.4} -> {:.4}",
            parent.task_id,
            train.len(),
            report.initial_loss,
            report.final_loss
        );
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadResult {
    pub head: HeadKind,
    pub dev_accuracy: f64,
    /// `None` when the task has no test split.
    pub test_accuracy: Option<f64>,
    /// Selected boosting rounds; `None` for the MLP head.
    pub boosting_rounds: Option<usize>,
    /// Rows the head was trained on.
    pub train_rows: usize,
    pub wall_seconds: f64,
}

/// One (task, seed) run with all requested heads.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub task_id: String,
    pub seed: u64,
    pub heads: Vec<HeadResult>,
    /// Encoder forward passes spent on fine-tuning.
    pub fine_tune_forward: ForwardCounter,
    /// Fingerprint of the fine-tuned encoder that every GBDT head read from.
    pub encoder_fingerprint: u64,
}

impl SeedResult {
    pub fn head(&self, head: HeadKind) -> Option<&HeadResult> {
        self.heads.iter().find(|h| h.head == head)
    }
}

fn split_accuracy(pred: &[usize], split: &SplitData) -> Result<Option<f64>> {
    if split.is_empty() {
        Ok(None)
    } else {
        accuracy(pred, &split.labels).map(Some)
    }
}

/// Fine-tune a copy of `encoder` on `task`, accumulating features when the
/// FreeGBDT head is requested, then build and evaluate every selected head.
pub fn run_task(encoder: &ModelState, task: &TaskDataset, config: &PipelineConfig, seed: u64) -> Result<SeedResult> {
    run_task_with_artifacts(encoder, task, config, seed).map(|(result, _)| result)
}

/// What a run leaves behind besides its scores.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    /// The fine-tuned encoder.
    pub encoder: ModelState,
    /// Features logged during fine-tuning; present when FreeGBDT ran.
    pub during: Option<FeatureStore>,
    /// Features extracted after fine-tuning; present when standard GBDT ran.
    pub post: Option<FeatureStore>,
    pub standard_gbdt: Option<Ensemble>,
    pub free_gbdt: Option<Ensemble>,
}

/// [`run_task`] that also returns the trained encoder, stores and ensembles.
pub fn run_task_with_artifacts(
    encoder: &ModelState,
    task: &TaskDataset,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(SeedResult, RunArtifacts)> {
    let train = task.train();
    let dev = task.dev();
    let test = task.test();
    if dev.is_empty() {
        return Err(Error::Empty(format!("task {} has no dev split", task.task_id)));
    }
    let mut state = encoder.clone();
    state.reset_head(task.num_classes)?;
    let gbdt = GbdtParams { num_classes: task.num_classes, seed, ..config.gbdt.clone() };

    let started = Instant::now();
    let mut session = FineTuneSession::new(&state, &train, &config.fine_tune, config.runs(HeadKind::FreeGbdt))?;
    session.run_to_end(&mut state, &train)?;
    let fine_tune_seconds = started.elapsed().as_secs_f64();
    let fine_tune_forward = session.counter;
    let accumulated = session.into_store();

    let mut heads = Vec::new();
    if config.runs(HeadKind::Mlp) {
        heads.push(HeadResult {
            head: HeadKind::Mlp,
            dev_accuracy: accuracy(&state.predict_class(dev.inputs.view())?, &dev.labels)?,
            test_accuracy: if test.is_empty() {
                None
            } else {
                split_accuracy(&state.predict_class(test.inputs.view())?, &test)?
            },
            boosting_rounds: None,
            train_rows: train.len() * config.fine_tune.epochs,
            wall_seconds: fine_tune_seconds,
        });
    }

    let mut post_store = None;
    let mut standard_gbdt = None;
    let mut free_gbdt = None;
    let gbdt_heads = [HeadKind::StandardGbdt, HeadKind::FreeGbdt];
    if gbdt_heads.iter().any(|&h| config.runs(h)) {
        let mut extra = ForwardCounter::default();
        let dev_x = encode(&state, dev.inputs.view(), &mut extra)?;
        let test_x = if test.is_empty() { None } else { Some(encode(&state, test.inputs.view(), &mut extra)?) };
        for head in gbdt_heads.into_iter().filter(|&h| config.runs(h)) {
            let started = Instant::now();
            let store: &FeatureStore = match head {
                HeadKind::StandardGbdt => post_store.insert(extract_features_post(&state, &train, &mut extra)?),
                _ => accumulated.as_ref().expect("accumulation enabled for the FreeGBDT head"),
            };
            let selection =
                select_rounds_on_features(store, dev_x.view(), &dev.labels, &config.round_candidates, &gbdt)?;
            let dev_accuracy = selection
                .accuracies
                .iter()
                .find(|(r, _)| *r == selection.best_rounds)
                .map(|&(_, a)| a)
                .expect("best round is a candidate");
            let test_accuracy = match &test_x {
                Some(x) => split_accuracy(&selection.ensemble.predict_class(x.view())?, &test)?,
                None => None,
            };
            heads.push(HeadResult {
                head,
                dev_accuracy,
                test_accuracy,
                boosting_rounds: Some(selection.best_rounds),
                train_rows: selection.n_samples,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
            match head {
                HeadKind::StandardGbdt => standard_gbdt = Some(selection.ensemble),
                _ => free_gbdt = Some(selection.ensemble),
            }
        }
    }
    for h in &heads {
        info!(
            "{} seed {seed} {}: dev {:.4} rounds {:?} rows {} ({:.3}s)",
            task.task_id, h.head, h.dev_accuracy, h.boosting_rounds, h.train_rows, h.wall_seconds
        );
    }
    let result = SeedResult {
        task_id: task.task_id.clone(),
        seed,
        heads,
        fine_tune_forward,
        encoder_fingerprint: state.encoder_fingerprint(),
    };
    let artifacts = RunArtifacts { encoder: state, during: accumulated, post: post_store, standard_gbdt, free_gbdt };
    Ok((result, artifacts))
}

/// Which paired differences enter the Wilcoxon test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonPopulation {
    /// One difference per (task, seed).
    AllPairs,
    /// One difference per task: the seed-mean of its paired differences.
    PerTaskMeans,
}

impl WilcoxonPopulation {
    pub fn as_str(self) -> &'static str {
        match self {
            WilcoxonPopulation::AllPairs => "all-pairs",
            WilcoxonPopulation::PerTaskMeans => "per-task-means",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all-pairs" | "all" => Ok(WilcoxonPopulation::AllPairs),
            "per-task-means" | "task-means" => Ok(WilcoxonPopulation::PerTaskMeans),
            other => Err(invalid(format!("unknown Wilcoxon population `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub task_id: String,
    pub head: HeadKind,
    pub dev_mean: f64,
    pub dev_std: f64,
    pub std_defined: bool,
    pub test_mean: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedDiff {
    pub task_id: String,
    pub seed: u64,
    /// FreeGBDT dev accuracy minus MLP dev accuracy.
    pub diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinLoss {
    pub task_id: String,
    pub head_a: HeadKind,
    pub head_b: HeadKind,
    /// Seeds where `head_a` scored strictly higher on dev.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonBlock {
    pub population: WilcoxonPopulation,
    pub primary: bool,
    /// The test outcome, or why it could not be computed.
    pub outcome: std::result::Result<WilcoxonResult, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub task_id: String,
    pub seed: u64,
    pub message: String,
}

/// Table-2-shaped aggregate of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    pub heads: Vec<HeadKind>,
    /// Successful runs in (task, seed) order.
    pub results: Vec<SeedResult>,
    pub failures: Vec<RunFailure>,
    pub cells: Vec<CellStats>,
    pub diffs: Vec<PairedDiff>,
    pub wilcoxon: Vec<WilcoxonBlock>,
    pub win_loss: Vec<WinLoss>,
}

impl ComparisonReport {
    /// Aggregate finished runs. `results` is re-sorted into the order of
    /// `tasks` and `seeds`.
    pub fn aggregate(
        tasks: Vec<String>,
        seeds: Vec<u64>,
        heads: Vec<HeadKind>,
        mut results: Vec<SeedResult>,
        failures: Vec<RunFailure>,
        primary: WilcoxonPopulation,
    ) -> Self {
        let task_pos = |t: &str| tasks.iter().position(|x| x == t).unwrap_or(usize::MAX);
        let seed_pos = |s: u64| seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);
        results.sort_by_key(|r| (task_pos(&r.task_id), seed_pos(r.seed)));

        let mut cells = Vec::new();
        for task in &tasks {
            for &head in &heads {
                let runs: Vec<&HeadResult> =
                    results.iter().filter(|r| &r.task_id == task).filter_map(|r| r.head(head)).collect();
                let dev: Vec<f64> = runs.iter().map(|h| h.dev_accuracy).collect();
                let Ok(stats) = mean_std(&dev) else { continue };
                let test: Option<Vec<f64>> = runs.iter().map(|h| h.test_accuracy).collect();
                cells.push(CellStats {
                    task_id: task.clone(),
                    head,
                    dev_mean: stats.mean,
                    dev_std: stats.std,
                    std_defined: stats.std_defined,
                    test_mean: test.and_then(|t| mean_std(&t).ok()).map(|s| s.mean),
                    n_seeds: stats.n,
                });
            }
        }

        let diffs: Vec<PairedDiff> = results
            .iter()
            .filter_map(|r| {
                let free = r.head(HeadKind::FreeGbdt)?;
                let mlp = r.head(HeadKind::Mlp)?;
                Some(PairedDiff {
                    task_id: r.task_id.clone(),
                    seed: r.seed,
                    diff: free.dev_accuracy - mlp.dev_accuracy,
                })
            })
            .collect();

        let wilcoxon = if diffs.is_empty() {
            Vec::new()
        } else {
            let all: Vec<f64> = diffs.iter().map(|d| d.diff).collect();
            let per_task: Vec<f64> = tasks
                .iter()
                .filter_map(|t| {
                    let v: Vec<f64> = diffs.iter().filter(|d| &d.task_id == t).map(|d| d.diff).collect();
                    mean_std(&v).ok().map(|s| s.mean)
                })
                .collect();
            [(WilcoxonPopulation::AllPairs, all), (WilcoxonPopulation::PerTaskMeans, per_task)]
                .into_iter()
                .map(|(population, d)| WilcoxonBlock {
                    population,
                    primary: population == primary,
                    outcome: wilcoxon_signed_rank(&d).map_err(|e| e.to_string()),
                })
                .collect()
        };

        let mut win_loss = Vec::new();
        for task in &tasks {
            for (i, &a) in heads.iter().enumerate() {
                for &b in &heads[i + 1..] {
                    let mut wl = WinLoss { task_id: task.clone(), head_a: a, head_b: b, wins: 0, losses: 0, ties: 0 };
                    for r in results.iter().filter(|r| &r.task_id == task) {
                        if let (Some(x), Some(y)) = (r.head(a), r.head(b)) {
                            match x.dev_accuracy.partial_cmp(&y.dev_accuracy) {
                                Some(std::cmp::Ordering::Greater) => wl.wins += 1,
                                Some(std::cmp::Ordering::Less) => wl.losses += 1,
                                _ => wl.ties += 1,
                            }
                        }
                    }
                    win_loss.push(wl);
                }
            }
        }

        Self { tasks, seeds, heads, results, failures, cells, diffs, wilcoxon, win_loss }
    }

    pub fn cell(&self, task_id: &str, head: HeadKind) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.task_id == task_id && c.head == head)
    }

    /// Win/loss counts of `a` against `b`, in either stored order.
    pub fn win_loss(&self, task_id: &str, a: HeadKind, b: HeadKind) -> Option<WinLoss> {
        self.win_loss.iter().filter(|w| w.task_id == task_id).find_map(|w| {
            if (w.head_a, w.head_b) == (a, b) {
                Some(w.clone())
            } else if (w.head_a, w.head_b) == (b, a) {
                Some(WinLoss { head_a: a, head_b: b, wins: w.losses, losses: w.wins, ..w.clone() })
            } else {
                None
            }
        })
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Options for [`compare_heads`] beyond the pipeline itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOptions {
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
    pub wilcoxon: WilcoxonPopulation,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { workers: 1, wilcoxon: WilcoxonPopulation::AllPairs }
    }
}

/// Full sweep: per seed, one shared pretrained encoder; per (task, seed),
/// fine-tuning with accumulation and all selected heads. Failed runs are
/// recorded in the report and left out of the aggregates.
pub fn compare_heads(
    parent: Option<&TaskDataset>,
    tasks: &[TaskDataset],
    seeds: &[u64],
    config: &PipelineConfig,
    options: SweepOptions,
) -> Result<ComparisonReport> {
    if tasks.is_empty() {
        return Err(invalid("compare needs at least one task"));
    }
    if seeds.len() < 2 {
        return Err(invalid("compare needs at least two seeds"));
    }
    let mut unique = seeds.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(invalid("seeds must be distinct"));
    }
    config.validate()?;
    for t in tasks {
        t.validate()?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;

    let (results, failures) = pool.install(|| {
        let encoders: Vec<Result<ModelState>> =
            seeds.par_iter().map(|&seed| prepare_encoder(parent, config, seed)).collect();
        let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|t| (0..seeds.len()).map(move |s| (t, s))).collect();
        let outcomes: Vec<Result<SeedResult>> = jobs
            .par_iter()
            .map(|&(t, s)| match &encoders[s] {
                Ok(encoder) => run_task(encoder, &tasks[t], config, seeds[s]),
                Err(e) => Err(Error::Diverged(format!("pretraining failed: {e}"))),
            })
            .collect();
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for (&(t, s), outcome) in jobs.iter().zip(outcomes) {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => {
                    warn!("{} seed {} failed: {e}", tasks[t].task_id, seeds[s]);
                    failures.push(RunFailure {
                        task_id: tasks[t].task_id.clone(),
                        seed: seeds[s],
                        message: e.to_string(),
                    });
                }
            }
        }
        (results, failures)
    });

    let heads: Vec<HeadKind> = HeadKind::ALL.into_iter().filter(|&h| config.runs(h)).collect();
    Ok(ComparisonReport::aggregate(
        tasks.iter().map(|t| t.task_id.clone()).collect(),
        seeds.to_vec(),
        heads,
        results,
        failures,
        options.wilcoxon,
    ))
}

/// Mean dev accuracy per head for one task, keyed by head.
pub fn head_means(report: &ComparisonReport, task_id: &str) -> BTreeMap<HeadKind, f64> {
    report.cells.iter().filter(|c| c.task_id == task_id).map(|c| (c.head, c.dev_mean)).collect()
}
