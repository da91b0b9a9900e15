//! Comma-separated renderings of sweep results, reports, curves and traces.
//!
//! Every renderer returns the file contents; writing is left to callers so
//! reruns can be compared byte for byte.

use std::path::Path;

use super::curve::CurvePoint;
use super::pipeline::{ComparisonReport, HeadResult, SeedResult};
use super::trace::TraceRow;
use crate::error::{Error, Result};
use crate::head::{ForwardCounter, HeadKind};

pub const RESULTS_HEADER: [&str; 7] =
    ["task_id", "seed", "head", "dev_accuracy", "test_accuracy", "boosting_rounds", "wall_seconds"];

const NA: &str = "NA";

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv output is UTF-8")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().flexible(true).from_writer(Vec::new())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

/// One row per (task, seed, head). Wall-clock seconds are written only when
/// `include_timing` is set, so default output is reproducible byte for byte.
pub fn results_csv(results: &[SeedResult], include_timing: bool) -> String {
    let mut w = writer();
    w.write_record(RESULTS_HEADER).unwrap();
    for r in results {
        for h in &r.heads {
            let timing = if include_timing { h.wall_seconds.to_string() } else { NA.into() };
            w.write_record([
                r.task_id.clone(),
                r.seed.to_string(),
                h.head.to_string(),
                h.dev_accuracy.to_string(),
                opt(h.test_accuracy),
                opt(h.boosting_rounds),
                timing,
            ])
            .unwrap();
        }
    }
    finish(w)
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line: line as usize, message: message.into() }
}

/// Reads a results file back into per-(task, seed) results, in file order.
/// Instrumentation fields not stored in the file are left at defaults.
pub fn read_results_csv(path: &Path) -> Result<Vec<SeedResult>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(path, 1, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(parse_err(path, 1, format!("expected header {}", RESULTS_HEADER.join(","))));
    }
    let mut out: Vec<SeedResult> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let num = |k: usize| -> Result<Option<f64>> {
            match field(k) {
                NA | "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| parse_err(path, line, format!("bad number `{s}`"))),
            }
        };
        let task_id = field(0).to_string();
        let seed: u64 = field(1).parse().map_err(|_| parse_err(path, line, format!("bad seed `{}`", field(1))))?;
        let head = HeadKind::parse(field(2)).map_err(|e| parse_err(path, line, e.to_string()))?;
        let dev_accuracy = num(3)?.ok_or_else(|| parse_err(path, line, "missing dev_accuracy"))?;
        let boosting_rounds = match field(5) {
            NA | "" => None,
            s => Some(s.parse().map_err(|_| parse_err(path, line, format!("bad boosting_rounds `{s}`")))?),
        };
        let result = HeadResult {
            head,
            dev_accuracy,
            test_accuracy: num(4)?,
            boosting_rounds,
            train_rows: 0,
            wall_seconds: num(6)?.unwrap_or(0.0),
        };
        match out.iter_mut().find(|r| r.task_id == task_id && r.seed == seed) {
            Some(r) => r.heads.push(result),
            None => out.push(SeedResult {
                task_id,
                seed,
                heads: vec![result],
                fine_tune_forward: ForwardCounter::default(),
                encoder_fingerprint: 0,
            }),
        }
    }
    Ok(out)
}

/// Aggregate table, Wilcoxon block and failed runs, separated by blank lines.
pub fn report_csv(report: &ComparisonReport) -> String {
    let mut table = writer();
    table.write_record(["task_id", "head", "n_seeds", "dev_mean", "dev_std", "std_defined", "test_mean"]).unwrap();
    for c in &report.cells {
        table
            .write_record([
                c.task_id.clone(),
                c.head.to_string(),
                c.n_seeds.to_string(),
                c.dev_mean.to_string(),
                c.dev_std.to_string(),
                c.std_defined.to_string(),
                opt(c.test_mean),
            ])
            .unwrap();
    }

    let mut wil = writer();
    wil.write_record([
        "population",
        "primary",
        "comparison",
        "n_pairs",
        "n_effective",
        "n_zeros",
        "w_plus",
        "w_minus",
        "p_two_sided",
        "method",
        "zero_handling",
        "error",
    ])
    .unwrap();
    for b in &report.wilcoxon {
        let n_pairs = match b.population {
            super::pipeline::WilcoxonPopulation::AllPairs => report.diffs.len(),
            super::pipeline::WilcoxonPopulation::PerTaskMeans => {
                report.tasks.iter().filter(|t| report.diffs.iter().any(|d| &d.task_id == *t)).count()
            }
        };
        let mut row = vec![
            b.population.as_str().to_string(),
            b.primary.to_string(),
            "free_gbdt-mlp".to_string(),
            n_pairs.to_string(),
        ];
        match &b.outcome {
            Ok(r) => row.extend([
                r.n_effective.to_string(),
                r.n_zeros.to_string(),
                r.w_plus.to_string(),
                r.w_minus.to_string(),
                r.p_two_sided.to_string(),
                r.method.as_str().to_string(),
                "zeros dropped (alternative: Pratt)".to_string(),
                String::new(),
            ]),
            Err(e) => {
                row.extend(std::iter::repeat_n(NA.to_string(), 6));
                row.extend(["zeros dropped (alternative: Pratt)".to_string(), e.clone()]);
            }
        }
        wil.write_record(&row).unwrap();
    }

    let mut failed = writer();
    failed.write_record(["failed_task_id", "seed", "message"]).unwrap();
    for f in &report.failures {
        failed.write_record([f.task_id.clone(), f.seed.to_string(), f.message.clone()]).unwrap();
    }
    [finish(table), finish(wil), finish(failed)].join("\n")
}

/// Heads by tasks, cells `mean (std)` in percent, like a paper table.
pub fn table_csv(report: &ComparisonReport) -> String {
    let mut w = writer();
    let mut header = vec!["head".to_string()];
    header.extend(report.tasks.iter().cloned());
    w.write_record(&header).unwrap();
    for &head in &report.heads {
        let mut row = vec![head.to_string()];
        for task in &report.tasks {
            row.push(match report.cell(task, head) {
                Some(c) => format!("{:.2} ({:.2})", 100.0 * c.dev_mean, 100.0 * c.dev_std),
                None => NA.into(),
            });
        }
        w.write_record(&row).unwrap();
    }
    finish(w)
}

pub fn diffs_csv(report: &ComparisonReport) -> String {
    let mut w = writer();
    w.write_record(["task_id", "seed", "free_gbdt_minus_mlp"]).unwrap();
    for d in &report.diffs {
        w.write_record([d.task_id.clone(), d.seed.to_string(), d.diff.to_string()]).unwrap();
    }
    finish(w)
}

pub fn win_loss_csv(report: &ComparisonReport) -> String {
    let mut w = writer();
    w.write_record(["task_id", "head_a", "head_b", "wins", "losses", "ties"]).unwrap();
    for x in &report.win_loss {
        w.write_record([
            x.task_id.clone(),
            x.head_a.to_string(),
            x.head_b.to_string(),
            x.wins.to_string(),
            x.losses.to_string(),
            x.ties.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut w = writer();
    w.write_record([
        "epoch",
        "mlp_accuracy",
        "standard_gbdt_accuracy",
        "free_gbdt_accuracy",
        "standard_gbdt_rows",
        "free_gbdt_rows",
        "standard_gbdt_rounds",
        "free_gbdt_rounds",
    ])
    .unwrap();
    for p in curve {
        w.write_record([
            p.epoch.to_string(),
            p.mlp_accuracy.to_string(),
            p.standard_gbdt_accuracy.to_string(),
            p.free_gbdt_accuracy.to_string(),
            p.standard_gbdt_rows.to_string(),
            p.free_gbdt_rows.to_string(),
            p.standard_gbdt_rounds.to_string(),
            p.free_gbdt_rounds.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut w = writer();
    w.write_record(["source", "epoch", "step", "sample_id", "value"]).unwrap();
    for r in rows {
        w.write_record([
            r.source.as_str().to_string(),
            r.epoch.to_string(),
            r.step.to_string(),
            r.sample_id.to_string(),
            r.value.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}
