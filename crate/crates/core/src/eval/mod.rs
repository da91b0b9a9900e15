//! Metrics, significance testing and the head comparison harness.

pub mod curve;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod trace;
pub mod wilcoxon;

pub use curve::{epoch_curve, CurvePoint};
pub use metrics::{accuracy, cb_metric, f1_binary, macro_f1, mean_std, MeanStd, F1};
pub use pipeline::{
    compare_heads, prepare_encoder, run_task, run_task_with_artifacts, CellStats, ComparisonReport, HeadResult,
    PairedDiff, PipelineConfig, RunArtifacts, RunFailure, SeedResult, SweepOptions, WilcoxonBlock, WilcoxonPopulation,
    WinLoss,
};
pub use trace::{
    drift_fraction, drift_summary, feature_trace, monotone_drift_fraction, DriftSummary, TraceRow,
    DRIFT_TREND_THRESHOLD,
};
pub use wilcoxon::{wilcoxon_signed_rank, PValueMethod, WilcoxonResult};
