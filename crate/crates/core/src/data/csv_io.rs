//! Dataset CSV files: a header `label,f0,f1,...`, optionally with a `split`
//! column, one sample per line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::dataset::{Split, TaskDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub task_id: String,
    pub label_column: String,
    /// When set, labels at or above this value are rejected. Otherwise the
    /// class count is inferred from the largest label.
    pub num_classes: Option<usize>,
}

impl CsvSchema {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), label_column: "label".into(), num_classes: None }
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = Some(num_classes);
        self
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Load a dataset, keeping rows in file order.
pub fn load_dataset_csv(path: &Path, schema: &CsvSchema) -> Result<TaskDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path).map_err(|e| match e
        .into_kind()
    {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(path, 1, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == schema.label_column)
        .ok_or_else(|| parse_err(path, 1, format!("no `{}` column in header", schema.label_column)))?;
    let split_col = headers.iter().position(|h| h.trim() == "split");
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_col && Some(i) != split_col).collect();
    if feature_cols.is_empty() {
        return Err(parse_err(path, 1, "no feature columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        let label_text = record[label_col].trim();
        let label: usize =
            label_text.parse().map_err(|_| parse_err(path, line, format!("label `{label_text}` is not a class id")))?;
        if let Some(k) = schema.num_classes {
            if label >= k {
                return Err(parse_err(path, line, format!("unknown label {label} (classes: {k})")));
            }
        }
        labels.push(label);
        splits.push(match split_col {
            Some(c) => Split::parse(record[c].trim())
                .ok_or_else(|| parse_err(path, line, format!("unknown split `{}`", &record[c])))?,
            None => Split::Train,
        });
        for &c in &feature_cols {
            let cell = record[c].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("cannot parse `{cell}` in column {}", &headers[c])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value in column {}", &headers[c])));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    let num_classes = schema.num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |&m| (m + 1).max(2)));
    let inputs = Array2::from_shape_vec((labels.len(), feature_cols.len()), values).expect("row lengths checked above");
    TaskDataset::with_splits(schema.task_id.clone(), inputs, labels, splits, num_classes)
}

/// Write a dataset. A `split` column is added only when some row is not
/// tagged train.
pub fn write_dataset_csv(ds: &TaskDataset, path: &Path) -> Result<()> {
    let with_split = ds.splits.iter().any(|&s| s != Split::Train);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "label")?;
    if with_split {
        write!(out, ",split")?;
    }
    for f in 0..ds.p() {
        write!(out, ",f{f}")?;
    }
    writeln!(out)?;
    for (i, row) in ds.inputs.rows().into_iter().enumerate() {
        write!(out, "{}", ds.labels[i])?;
        if with_split {
            write!(out, ",{}", ds.splits[i].as_str())?;
        }
        for v in row {
            // `{:?}` prints the shortest representation that parses back exactly.
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
