//! Experiment configuration: one JSON file plus flag overrides, resolved into
//! the exact settings a command ran with.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use freegbdt::data::SyntheticSuiteSpec;
use freegbdt::eval::{PipelineConfig, WilcoxonPopulation};
use freegbdt::HeadKind;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FREEGBDT_OUT";

pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenSuite,
    Run,
    Compare,
    EpochsCurve,
    Trace,
    Wilcoxon,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GenSuite => "gen-suite",
            Mode::Run => "run",
            Mode::Compare => "compare",
            Mode::EpochsCurve => "epochs-curve",
            Mode::Trace => "trace",
            Mode::Wilcoxon => "wilcoxon",
        }
    }

    fn default_seeds(self) -> Vec<u64> {
        match self {
            Mode::Compare => (0..20).collect(),
            _ => vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled in on resolution.
    pub mode: Option<Mode>,
    /// Directory written by `gen-suite`.
    pub suite: Option<PathBuf>,
    /// Single task CSV with a `split` column. Takes precedence over `suite`.
    pub dataset: Option<PathBuf>,
    /// results.csv read by `wilcoxon`.
    pub results: Option<PathBuf>,
    /// Child tasks to use; empty means all.
    pub tasks: Vec<String>,
    pub output: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub workers: usize,
    pub wilcoxon: WilcoxonPopulation,
    /// Write wall-clock seconds into results.csv. Off by default so reruns
    /// are byte-identical.
    pub include_timing: bool,
    /// Feature dimension followed by `trace`.
    pub trace_dimension: usize,
    pub pipeline: PipelineConfig,
    /// Generator settings for `gen-suite`, and for the in-memory suite used
    /// when neither `suite` nor `dataset` is set.
    pub suite_spec: SyntheticSuiteSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            suite: None,
            dataset: None,
            results: None,
            tasks: Vec::new(),
            output: None,
            seeds: None,
            workers: 1,
            wilcoxon: WilcoxonPopulation::AllPairs,
            include_timing: false,
            trace_dimension: 0,
            pipeline: PipelineConfig::default(),
            suite_spec: SyntheticSuiteSpec::default(),
        }
    }
}

/// Flag values that override the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub heads: Option<Vec<HeadKind>>,
    pub rounds: Option<Vec<usize>>,
    pub workers: Option<usize>,
    pub wilcoxon: Option<WilcoxonPopulation>,
    pub suite: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub tasks: Option<Vec<String>>,
    pub epochs: Option<usize>,
    pub dimension: Option<usize>,
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Apply overrides and per-mode defaults, then validate.
    pub fn resolve(mut self, mode: Mode, o: Overrides) -> anyhow::Result<Self> {
        self.mode = Some(mode);
        if let Some(v) = o.suite {
            self.suite = Some(v);
        }
        if let Some(v) = o.dataset {
            self.dataset = Some(v);
        }
        if let Some(v) = o.results {
            self.results = Some(v);
        }
        if let Some(v) = o.tasks {
            self.tasks = v;
        }
        if let Some(v) = o.seeds {
            self.seeds = Some(v);
        }
        if let Some(v) = o.heads {
            self.pipeline.heads = v;
        }
        if let Some(v) = o.rounds {
            self.pipeline.round_candidates = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.wilcoxon {
            self.wilcoxon = v;
        }
        if let Some(v) = o.epochs {
            self.pipeline.fine_tune.epochs = v;
        }
        if let Some(v) = o.dimension {
            self.trace_dimension = v;
        }
        self.include_timing |= o.timing;
        self.output = Some(match (o.out, self.output.take()) {
            (Some(p), _) | (None, Some(p)) => p,
            (None, None) => default_output_root().join(mode.as_str()),
        });
        if self.seeds.is_none() {
            self.seeds = Some(mode.default_seeds());
        }
        let mut seeds = self.seeds.clone().unwrap_or_default();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.is_empty() {
            bail!("the seed list is empty");
        }
        if mode == Mode::Compare && seeds.len() < 2 {
            bail!("compare needs at least 2 distinct seeds, got {}", seeds.len());
        }
        self.seeds = Some(seeds);
        let mut heads = self.pipeline.heads.clone();
        heads.sort_unstable();
        heads.dedup();
        self.pipeline.heads = heads;
        let mut rounds = self.pipeline.round_candidates.clone();
        rounds.sort_unstable();
        rounds.dedup();
        self.pipeline.round_candidates = rounds;
        if mode == Mode::Wilcoxon && self.results.is_none() {
            bail!("wilcoxon needs a results file (--results PATH)");
        }
        match mode {
            Mode::GenSuite => self.suite_spec.validate()?,
            Mode::Wilcoxon => {}
            _ => self.pipeline.validate()?,
        }
        Ok(self)
    }

    pub fn seeds(&self) -> &[u64] {
        self.seeds.as_deref().unwrap_or(&[])
    }

    pub fn output(&self) -> &Path {
        self.output.as_deref().expect("resolved config has an output directory")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

fn default_output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("freegbdt-runs"))
}

/// Parse `0..20`, `3` or `0,4,7`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
        if a >= b {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok((a..b).collect());
    }
    parse_list(s)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(|x| x.trim().parse().map_err(|_| format!("cannot parse `{}`", x.trim()))).collect()
}

pub fn parse_heads(s: &str) -> Result<Vec<HeadKind>, String> {
    s.split(',').map(|h| HeadKind::parse(h.trim()).map_err(|e| e.to_string())).collect()
}
