use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A labelled dataset whose rows are tagged train, dev or test. Row order
/// is significant and preserved by every operation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task_id: String,
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub num_classes: usize,
}

/// Rows of one split, in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    /// Row indices into the parent dataset.
    pub rows: Vec<usize>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl TaskDataset {
    /// All rows tagged train.
    pub fn new(
        task_id: impl Into<String>,
        inputs: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let splits = vec![Split::Train; labels.len()];
        Self::with_splits(task_id, inputs, labels, splits, num_classes)
    }

    pub fn with_splits(
        task_id: impl Into<String>,
        inputs: Array2<f64>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        num_classes: usize,
    ) -> Result<Self> {
        let ds = Self { task_id: task_id.into(), inputs, labels, splits, num_classes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.nrows();
        if self.labels.len() != n || self.splits.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} labels and split tags"),
                actual: format!("{} labels, {} tags", self.labels.len(), self.splits.len()),
            });
        }
        if self.num_classes < 2 {
            return Err(invalid("a task needs at least 2 classes"));
        }
        for (row, &label) in self.labels.iter().enumerate() {
            if label >= self.num_classes {
                return Err(Error::LabelOutOfRange { row, label, num_classes: self.num_classes });
            }
        }
        let mut in_train = vec![false; self.num_classes];
        for (&y, &s) in self.labels.iter().zip(&self.splits) {
            if s == Split::Train {
                in_train[y] = true;
            }
        }
        for (&y, &s) in self.labels.iter().zip(&self.splits) {
            if s != Split::Train && !in_train[y] {
                return Err(invalid(format!("class {y} appears in {} but not in train", s.as_str())));
            }
        }
        Ok(())
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    /// Input width.
    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn split(&self, which: Split) -> SplitData {
        let rows: Vec<usize> = (0..self.n()).filter(|&i| self.splits[i] == which).collect();
        SplitData {
            inputs: self.inputs.select(Axis(0), &rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            rows,
        }
    }

    pub fn train(&self) -> SplitData {
        self.split(Split::Train)
    }

    pub fn dev(&self) -> SplitData {
        self.split(Split::Dev)
    }

    pub fn test(&self) -> SplitData {
        self.split(Split::Test)
    }

    pub fn count(&self, which: Split) -> usize {
        self.splits.iter().filter(|&&s| s == which).count()
    }

    /// Per-class counts over all rows.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}
