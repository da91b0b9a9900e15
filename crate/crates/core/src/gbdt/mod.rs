//! Histogram-based gradient boosted decision trees.

pub mod binning;
pub mod ensemble;
pub mod io;
pub mod objective;
pub mod params;
pub mod split;
pub mod tree;

pub use binning::{bin_features, BinnedDataset};
pub use ensemble::{argmax_rows, fit, fit_with_report, Ensemble, FitReport};
pub use objective::compute_gradients;
pub use params::{GbdtParams, Objective};
pub use split::split_gain;
pub use tree::{grow_tree, Node, Tree};
