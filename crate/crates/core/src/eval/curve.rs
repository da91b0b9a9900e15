//! Head comparison after every fine-tuning epoch.

use super::metrics::accuracy;
use super::pipeline::PipelineConfig;
use crate::data::TaskDataset;
use crate::error::{invalid, Error, Result};
use crate::gbdt::GbdtParams;
use crate::head::training::encode;
use crate::head::{extract_features_post, select_rounds_on_features, FineTuneSession, ForwardCounter};
use crate::nn::ModelState;

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    /// 1-based epoch after which training was paused.
    pub epoch: usize,
    pub mlp_accuracy: f64,
    pub standard_gbdt_accuracy: f64,
    pub free_gbdt_accuracy: f64,
    /// Rows the standard GBDT was trained on; always `N`.
    pub standard_gbdt_rows: usize,
    /// Rows the FreeGBDT was trained on; `N * epoch`.
    pub free_gbdt_rows: usize,
    pub standard_gbdt_rounds: usize,
    pub free_gbdt_rounds: usize,
}

/// Fine-tune a copy of `encoder` on `task`, pausing after each epoch to
/// score the MLP head, a standard GBDT on freshly extracted features and a
/// FreeGBDT on the store accumulated so far, all on the dev split.
pub fn epoch_curve(
    encoder: &ModelState,
    task: &TaskDataset,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    config.validate()?;
    let train = task.train();
    let dev = task.dev();
    if dev.is_empty() {
        return Err(Error::Empty(format!("task {} has no dev split", task.task_id)));
    }
    if config.fine_tune.epochs == 0 {
        return Err(invalid("epoch curve needs at least one epoch"));
    }
    let mut state = encoder.clone();
    state.reset_head(task.num_classes)?;
    let gbdt = GbdtParams { num_classes: task.num_classes, seed, ..config.gbdt.clone() };
    let mut session = FineTuneSession::new(&state, &train, &config.fine_tune, true)?;
    let mut probe = ForwardCounter::default();
    let mut curve = Vec::with_capacity(config.fine_tune.epochs);
    while !session.is_finished() {
        session.run_epoch(&mut state, &train)?;
        let epoch = session.epochs_done();
        let mlp_accuracy = accuracy(&state.predict_class(dev.inputs.view())?, &dev.labels)?;
        let dev_x = encode(&state, dev.inputs.view(), &mut probe)?;
        let post = extract_features_post(&state, &train, &mut probe)?;
        let standard = select_rounds_on_features(&post, dev_x.view(), &dev.labels, &config.round_candidates, &gbdt)?;
        let store = session.store().expect("accumulating session");
        let free = select_rounds_on_features(store, dev_x.view(), &dev.labels, &config.round_candidates, &gbdt)?;
        let best = |s: &crate::head::RoundSelection| {
            s.accuracies.iter().find(|(r, _)| *r == s.best_rounds).map(|&(_, a)| a).expect("best round is a candidate")
        };
        curve.push(CurvePoint {
            epoch,
            mlp_accuracy,
            standard_gbdt_accuracy: best(&standard),
            free_gbdt_accuracy: best(&free),
            standard_gbdt_rows: standard.n_samples,
            free_gbdt_rows: free.n_samples,
            standard_gbdt_rounds: standard.best_rounds,
            free_gbdt_rounds: free.best_rounds,
        });
        log::info!(
            "{} epoch {epoch}: mlp {:.4} standard {:.4} free {:.4}",
            task.task_id,
            mlp_accuracy,
            best(&standard),
            best(&free)
        );
    }
    Ok(curve)
}
