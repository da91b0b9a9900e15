//! Gradient-boosted classification heads for fine-tuned encoders.
//!
//! The crate bundles a from-scratch histogram GBDT ([`gbdt`]), a small
//! trainable feed-forward encoder with an MLP head ([`nn`]), the two ways of
//! collecting GBDT training features from a fine-tuning run ([`head`]),
//! dataset handling ([`data`]) and the multi-seed evaluation harness
//! ([`eval`]).
//!
//! The standard GBDT head is trained on features extracted in one eval-mode
//! pass after fine-tuning. The FreeGBDT head is trained on every feature
//! vector the encoder produced while it was being fine-tuned, `N * E` rows
//! for `N` samples and `E` epochs, without any extra encoder work.

mod binio;
pub mod data;
pub mod error;
pub mod eval;
pub mod gbdt;
pub mod head;
pub mod nn;

pub use data::TaskDataset;
pub use error::{Error, Result};
pub use gbdt::{Ensemble, GbdtParams, Objective};
pub use head::{FeatureRecord, FeatureStore, HeadKind, StoreSource};
pub use nn::{EncoderConfig, ModelState, TrainConfig};
