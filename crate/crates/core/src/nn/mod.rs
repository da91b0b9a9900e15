//! A small trainable encoder with an MLP classification head.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod schedule;
pub mod train;

pub use adam::adam_step;
pub use config::{Activation, EncoderConfig, TrainConfig};
pub use model::{cross_entropy_loss, ForwardCache, Mode, ModelState};
pub use schedule::one_cycle_lr;
pub use train::{pretrain, train_step, FineTuner, Minibatch, PretrainReport, StepView};
