//! Minibatch training loops.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::adam::adam_step;
use super::config::TrainConfig;
use super::model::{Mode, ModelState};
use super::schedule::one_cycle_lr;
use crate::error::{invalid, Error, Result};

/// A slice of the training set, with the rows' stable sample ids.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
}

impl Minibatch {
    pub fn gather(inputs: ArrayView2<'_, f64>, labels: &[usize], ids: &[usize]) -> Self {
        Self {
            inputs: inputs.select(Axis(0), ids),
            labels: ids.iter().map(|&i| labels[i]).collect(),
            sample_ids: ids.to_vec(),
        }
    }
}

/// What the training loop exposes right after the forward pass of a step,
/// before the loss is taken and parameters change.
pub struct StepView<'a> {
    /// 1-based epoch.
    pub epoch: usize,
    /// 0-based global step.
    pub step: usize,
    pub batch: &'a Minibatch,
    pub features: &'a Array2<f64>,
}

/// Drives fine-tuning one epoch at a time under a single one-cycle schedule
/// spanning all configured epochs.
#[derive(Clone, Debug)]
pub struct FineTuner {
    pub config: TrainConfig,
    n_samples: usize,
    total_steps: usize,
    epochs_done: usize,
    steps_done: usize,
    /// Mean minibatch loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl FineTuner {
    pub fn new(config: TrainConfig, n_samples: usize) -> Result<Self> {
        Self::resume(config, n_samples, 0)
    }

    /// Continue a run after `epochs_done` completed epochs.
    pub fn resume(config: TrainConfig, n_samples: usize, epochs_done: usize) -> Result<Self> {
        config.validate()?;
        if n_samples == 0 {
            return Err(Error::Empty("training set has no samples".into()));
        }
        if epochs_done > config.epochs {
            return Err(invalid("cannot resume past the last epoch"));
        }
        let per_epoch = config.steps_per_epoch(n_samples);
        Ok(Self {
            total_steps: per_epoch * config.epochs,
            steps_done: per_epoch * epochs_done,
            epochs_done,
            n_samples,
            config,
            epoch_losses: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }

    /// Visit order of the next epoch. Consumes model RNG when shuffling.
    pub fn epoch_order(&self, state: &mut ModelState) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_samples).collect();
        if self.config.shuffle {
            order.shuffle(&mut state.rng);
        }
        order
    }

    /// Run one full epoch. `observe` sees every step's features before the
    /// parameter update.
    pub fn run_epoch(
        &mut self,
        state: &mut ModelState,
        inputs: ArrayView2<'_, f64>,
        labels: &[usize],
        mut observe: impl FnMut(StepView<'_>),
    ) -> Result<f64> {
        if self.is_finished() {
            return Err(invalid("all epochs already completed"));
        }
        if inputs.nrows() != self.n_samples || labels.len() != self.n_samples {
            return Err(Error::ShapeMismatch {
                expected: format!("{} samples", self.n_samples),
                actual: format!("{} rows, {} labels", inputs.nrows(), labels.len()),
            });
        }
        let order = self.epoch_order(state);
        let epoch = self.epochs_done + 1;
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for ids in order.chunks(self.config.batch_size) {
            let batch = Minibatch::gather(inputs, labels, ids);
            let lr = one_cycle_lr(self.steps_done, self.total_steps, self.config.max_learning_rate)?;
            let step = self.steps_done;
            let loss = train_step(state, &batch, lr, self.config.weight_decay, |features| {
                observe(StepView { epoch, step, batch: &batch, features })
            })
            .map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!("epoch {epoch}, step {step}: {msg}")),
                other => other,
            })?;
            loss_sum += loss;
            batches += 1;
            self.steps_done += 1;
        }
        self.epochs_done += 1;
        let mean = loss_sum / batches as f64;
        self.epoch_losses.push(mean);
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        Ok(mean)
    }
}

/// Forward in train mode, hand the features to `on_features`, then take the
/// loss and apply one Adam update.
pub fn train_step(
    state: &mut ModelState,
    batch: &Minibatch,
    lr: f64,
    weight_decay: f64,
    on_features: impl FnOnce(&Array2<f64>),
) -> Result<f64> {
    let cache = state.forward(batch.inputs.view(), Mode::Train)?;
    on_features(&cache.features);
    let (loss, grads) = state.backward(&cache, &batch.labels)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss is {loss}")));
    }
    adam_step(state, &grads, lr, weight_decay)?;
    Ok(loss)
}

/// Mean eval-mode loss over a whole dataset.
pub fn eval_loss(state: &ModelState, inputs: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let logits = state.forward_eval(inputs)?.logits;
    super::model::cross_entropy_loss(logits.view(), labels)
}

/// Losses recorded during intermediate pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Eval-mode loss over the pretraining set before any update.
    pub initial_loss: f64,
    /// Eval-mode loss over the pretraining set after the last epoch.
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Supervised training of encoder and head on an intermediate task. The head
/// must already match the task's class count; callers swap in a fresh head
/// for the target task afterwards with [`ModelState::reset_head`].
pub fn pretrain(
    state: &mut ModelState,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<PretrainReport> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if classes > state.config.num_classes {
        return Err(invalid(format!(
            "pretraining labels need {classes} classes, head has {}",
            state.config.num_classes
        )));
    }
    let initial_loss = eval_loss(state, inputs, labels)?;
    if config.epochs == 0 {
        return Ok(PretrainReport { initial_loss, final_loss: initial_loss, epoch_losses: Vec::new() });
    }
    let mut tuner = FineTuner::new(config.clone(), inputs.nrows())?;
    while !tuner.is_finished() {
        tuner.run_epoch(state, inputs, labels, |_| {})?;
    }
    let final_loss = eval_loss(state, inputs, labels)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!("pretraining ended with loss {final_loss}")));
    }
    Ok(PretrainReport { initial_loss, final_loss, epoch_losses: tuner.epoch_losses })
}
