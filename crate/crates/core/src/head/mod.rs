//! Classification heads and the feature stores they train on.

pub mod training;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use training::{
    encode, extract_features_post, fine_tune_accumulate, pick_best_rounds, select_boosting_rounds,
    select_rounds_on_features, train_free_gbdt, train_standard_gbdt, FineTuneSession, ForwardCounter, RoundSelection,
    DEFAULT_ROUND_CANDIDATES,
};

/// The three heads compared on every task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Mlp,
    StandardGbdt,
    FreeGbdt,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Mlp, HeadKind::StandardGbdt, HeadKind::FreeGbdt];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Mlp => "mlp",
            HeadKind::StandardGbdt => "standard_gbdt",
            HeadKind::FreeGbdt => "free_gbdt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "mlp" => Ok(HeadKind::Mlp),
            "standard_gbdt" | "gbdt" => Ok(HeadKind::StandardGbdt),
            "free_gbdt" | "freegbdt" => Ok(HeadKind::FreeGbdt),
            other => Err(invalid(format!("unknown head `{other}`"))),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// When the features in a store were captured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StoreSource {
    /// Every train-mode forward pass of fine-tuning.
    DuringTraining,
    /// One eval-mode pass after fine-tuning.
    PostTraining,
}

impl StoreSource {
    pub fn as_str(self) -> &'static str {
        match self {
            StoreSource::DuringTraining => "during_training",
            StoreSource::PostTraining => "post_training",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            StoreSource::DuringTraining => 0,
            StoreSource::PostTraining => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(StoreSource::DuringTraining),
            1 => Some(StoreSource::PostTraining),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    /// 1-based fine-tuning epoch; 0 for post-training extraction.
    pub epoch: u32,
    /// Global optimizer step at which the feature was computed.
    pub step: u64,
    /// Row index within the training split.
    pub sample_id: u64,
    pub feature: Vec<f32>,
    pub label: u32,
}

/// Append-only log of feature vectors, in the order they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    pub records: Vec<FeatureRecord>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub source: StoreSource,
}

impl FeatureStore {
    pub fn new(feature_dim: usize, num_classes: usize, source: StoreSource) -> Self {
        Self { records: Vec::new(), feature_dim, num_classes, source }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: FeatureRecord) -> Result<()> {
        self.check(&record, self.records.last())?;
        self.records.push(record);
        Ok(())
    }

    fn check(&self, record: &FeatureRecord, prev: Option<&FeatureRecord>) -> Result<()> {
        if record.feature.len() != self.feature_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("feature of width {}", self.feature_dim),
                actual: format!("width {}", record.feature.len()),
            });
        }
        if record.label as usize >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                row: self.records.len(),
                label: record.label as usize,
                num_classes: self.num_classes,
            });
        }
        if prev.is_some_and(|p| record.step < p.step) {
            return Err(invalid("feature store steps must be nondecreasing"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = None;
        for r in &self.records {
            self.check(r, prev)?;
            prev = Some(r);
        }
        Ok(())
    }

    /// The records up to and including `epoch`.
    pub fn through_epoch(&self, epoch: u32) -> FeatureStore {
        FeatureStore {
            records: self.records.iter().filter(|r| r.epoch <= epoch).cloned().collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> FeatureStore {
        FeatureStore::new(self.feature_dim, self.num_classes, self.source)
    }

    /// Feature matrix and labels in record order.
    pub fn to_matrix(&self) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((self.records.len(), self.feature_dim));
        for (mut row, r) in x.rows_mut().into_iter().zip(&self.records) {
            row.iter_mut().zip(&r.feature).for_each(|(o, &v)| *o = v as f64);
        }
        (x, self.records.iter().map(|r| r.label as usize).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_names_round_trip() {
        for h in HeadKind::ALL {
            assert_eq!(HeadKind::parse(h.as_str()).unwrap(), h);
        }
        assert!(HeadKind::parse("svm").is_err());
    }

    #[test]
    fn push_enforces_width_and_order() {
        let mut s = FeatureStore::new(2, 2, StoreSource::DuringTraining);
        let rec = |step, w: usize| FeatureRecord { epoch: 1, step, sample_id: 0, feature: vec![0.0; w], label: 1 };
        s.push(rec(3, 2)).unwrap();
        assert!(s.push(rec(4, 3)).is_err());
        assert!(s.push(rec(2, 2)).is_err());
        s.push(rec(3, 2)).unwrap();
        assert_eq!(s.len(), 2);
    }
}
