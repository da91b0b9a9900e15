//! Fine-tuning with feature accumulation, post-hoc extraction, and the two
//! GBDT heads built from them.

use ndarray::{ArrayView2, Axis};

use super::{FeatureRecord, FeatureStore, StoreSource};
use crate::data::SplitData;
use crate::error::{invalid, Error, Result};
use crate::gbdt::{fit_with_report, Ensemble, FitReport, GbdtParams};
use crate::nn::{FineTuner, ModelState, TrainConfig};

/// Boosting-round candidates tried on the dev set.
pub const DEFAULT_ROUND_CANDIDATES: [usize; 5] = [1, 10, 20, 30, 40];

/// Batch size for eval-mode extraction passes.
const EXTRACT_BATCH: usize = 256;

/// Counts encoder forward passes issued through this module.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardCounter {
    pub calls: u64,
    pub rows: u64,
}

impl ForwardCounter {
    fn record(&mut self, rows: usize) {
        self.calls += 1;
        self.rows += rows as u64;
    }
}

/// A fine-tuning run that optionally logs every step's features.
#[derive(Debug)]
pub struct FineTuneSession {
    tuner: FineTuner,
    store: Option<FeatureStore>,
    pub counter: ForwardCounter,
}

impl FineTuneSession {
    /// `accumulate = false` gives a plain MLP fine-tuning run.
    pub fn new(state: &ModelState, train: &SplitData, config: &TrainConfig, accumulate: bool) -> Result<Self> {
        if config.epochs == 0 {
            return Err(invalid("fine-tuning needs at least one epoch"));
        }
        if train.is_empty() {
            return Err(Error::Empty("training split is empty".into()));
        }
        let store = accumulate.then(|| {
            FeatureStore::new(state.config.feature_dim, state.config.num_classes, StoreSource::DuringTraining)
        });
        Ok(Self { tuner: FineTuner::new(config.clone(), train.len())?, store, counter: ForwardCounter::default() })
    }

    pub fn epochs_done(&self) -> usize {
        self.tuner.epochs_done()
    }

    pub fn is_finished(&self) -> bool {
        self.tuner.is_finished()
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.tuner.epoch_losses
    }

    /// One epoch: per minibatch, encoder forward (train mode), append the
    /// features to the store, head loss, update of head and encoder.
    pub fn run_epoch(&mut self, state: &mut ModelState, train: &SplitData) -> Result<f64> {
        let counter = &mut self.counter;
        let store = &mut self.store;
        let mut push_err = None;
        let loss = self.tuner.run_epoch(state, train.inputs.view(), &train.labels, |view| {
            counter.record(view.batch.labels.len());
            if let Some(store) = store.as_mut() {
                for (i, row) in view.features.rows().into_iter().enumerate() {
                    let rec = FeatureRecord {
                        epoch: view.epoch as u32,
                        step: view.step as u64,
                        sample_id: view.batch.sample_ids[i] as u64,
                        feature: row.iter().map(|&v| v as f32).collect(),
                        label: view.batch.labels[i] as u32,
                    };
                    if let Err(e) = store.push(rec) {
                        push_err.get_or_insert(e);
                    }
                }
            }
        })?;
        match push_err {
            Some(e) => Err(e),
            None => Ok(loss),
        }
    }

    pub fn run_to_end(&mut self, state: &mut ModelState, train: &SplitData) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch(state, train)?;
        }
        Ok(())
    }

    pub fn store(&self) -> Option<&FeatureStore> {
        self.store.as_ref()
    }

    pub fn into_store(self) -> Option<FeatureStore> {
        self.store
    }
}

/// Fine-tune for all configured epochs while logging every forward pass's
/// features. The returned store holds `N * E` records.
pub fn fine_tune_accumulate(
    state: &mut ModelState,
    train: &SplitData,
    config: &TrainConfig,
) -> Result<(FeatureStore, ForwardCounter)> {
    let mut session = FineTuneSession::new(state, train, config, true)?;
    session.run_to_end(state, train)?;
    let counter = session.counter;
    Ok((session.into_store().expect("accumulating session"), counter))
}

/// One eval-mode pass over the training split; no parameter changes.
pub fn extract_features_post(
    state: &ModelState,
    train: &SplitData,
    counter: &mut ForwardCounter,
) -> Result<FeatureStore> {
    let mut store = FeatureStore::new(state.config.feature_dim, state.config.num_classes, StoreSource::PostTraining);
    let mut offset = 0;
    for chunk in train.inputs.axis_chunks_iter(Axis(0), EXTRACT_BATCH) {
        let features = state.features(chunk)?;
        counter.record(chunk.nrows());
        for (i, row) in features.rows().into_iter().enumerate() {
            let id = offset + i;
            store.push(FeatureRecord {
                epoch: 0,
                step: 0,
                sample_id: id as u64,
                feature: row.iter().map(|&v| v as f32).collect(),
                label: train.labels[id] as u32,
            })?;
        }
        offset += chunk.nrows();
    }
    Ok(store)
}

/// Eval-mode features of arbitrary inputs, rounded through `f32` like stored
/// training features so both sides of a GBDT see the same precision.
pub fn encode(
    state: &ModelState,
    inputs: ArrayView2<'_, f64>,
    counter: &mut ForwardCounter,
) -> Result<ndarray::Array2<f64>> {
    let mut out = state.features(inputs)?;
    counter.record(inputs.nrows());
    out.mapv_inplace(|v| v as f32 as f64);
    Ok(out)
}

fn fit_store(store: &FeatureStore, params: &GbdtParams) -> Result<FitReport> {
    let (x, y) = store.to_matrix();
    let params = GbdtParams { num_classes: store.num_classes, ..params.clone() };
    fit_with_report(x.view(), &y, &params)
}

/// Standard GBDT head: fit on post-training features in stored order.
pub fn train_standard_gbdt(store: &FeatureStore, params: &GbdtParams) -> Result<FitReport> {
    if store.source != StoreSource::PostTraining {
        return Err(Error::SourceMismatch {
            expected: StoreSource::PostTraining.as_str(),
            found: store.source.as_str(),
        });
    }
    fit_store(store, params)
}

/// FreeGBDT head: fit on every accumulated record in accumulation order.
/// Touches no encoder.
pub fn train_free_gbdt(store: &FeatureStore, params: &GbdtParams) -> Result<FitReport> {
    if store.source != StoreSource::DuringTraining {
        return Err(Error::SourceMismatch {
            expected: StoreSource::DuringTraining.as_str(),
            found: store.source.as_str(),
        });
    }
    fit_store(store, params)
}

/// Outcome of choosing the number of boosting rounds on the dev set.
#[derive(Clone, Debug)]
pub struct RoundSelection {
    pub best_rounds: usize,
    /// `(rounds, dev accuracy)` per candidate, ascending in rounds.
    pub accuracies: Vec<(usize, f64)>,
    /// Ensemble truncated to `best_rounds`.
    pub ensemble: Ensemble,
    /// Rows the GBDT was trained on.
    pub n_samples: usize,
}

/// Highest accuracy wins; ties go to fewer rounds.
pub fn pick_best_rounds(accuracies: &[(usize, f64)]) -> Option<usize> {
    let mut sorted = accuracies.to_vec();
    sorted.sort_by_key(|&(r, _)| r);
    sorted
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (r, a)| match best {
            Some((_, b)) if a <= b => best,
            _ => Some((r, a)),
        })
        .map(|(r, _)| r)
}

/// Train on `store` and pick the round count with the best dev accuracy.
///
/// Boosting is sequential, so the ensemble with `r` rounds is the first `r`
/// rounds of the ensemble with `max(candidates)` rounds; one fit serves every
/// candidate.
pub fn select_rounds_on_features(
    store: &FeatureStore,
    dev_features: ArrayView2<'_, f64>,
    dev_labels: &[usize],
    candidates: &[usize],
    params: &GbdtParams,
) -> Result<RoundSelection> {
    if candidates.is_empty() || candidates.contains(&0) {
        return Err(invalid("round candidates must be a nonempty set of positive integers"));
    }
    if dev_labels.is_empty() {
        return Err(Error::Empty("dev split is empty".into()));
    }
    let mut rounds: Vec<usize> = candidates.to_vec();
    rounds.sort_unstable();
    rounds.dedup();
    let max_rounds = *rounds.last().unwrap();
    let params = GbdtParams { boosting_rounds: max_rounds, ..params.clone() };
    let report = match store.source {
        StoreSource::PostTraining => train_standard_gbdt(store, &params)?,
        StoreSource::DuringTraining => train_free_gbdt(store, &params)?,
    };
    let staged = report.ensemble.staged_predict_class(dev_features, &rounds)?;
    let accuracies: Vec<(usize, f64)> = rounds
        .iter()
        .zip(&staged)
        .map(|(&r, pred)| {
            let hits = pred.iter().zip(dev_labels).filter(|(a, b)| a == b).count();
            (r, hits as f64 / dev_labels.len() as f64)
        })
        .collect();
    let best_rounds = pick_best_rounds(&accuracies).expect("nonempty candidates");
    Ok(RoundSelection {
        best_rounds,
        accuracies,
        ensemble: report.ensemble.truncated(best_rounds),
        n_samples: report.n_samples,
    })
}

/// [`select_rounds_on_features`] with dev features from one eval-mode pass
/// of `encoder`.
pub fn select_boosting_rounds(
    store: &FeatureStore,
    dev: &SplitData,
    encoder: &ModelState,
    candidates: &[usize],
    params: &GbdtParams,
    counter: &mut ForwardCounter,
) -> Result<RoundSelection> {
    let dev_features = encode(encoder, dev.inputs.view(), counter)?;
    select_rounds_on_features(store, dev_features.view(), &dev.labels, candidates, params)
}
