use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Loss driving the boosting rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Binary logistic for two classes, softmax otherwise.
    Auto,
    Softmax,
    Logistic,
}

impl Objective {
    /// Concrete objective for a task with `num_classes` classes.
    pub fn resolve(self, num_classes: usize) -> Objective {
        match self {
            Objective::Auto if num_classes == 2 => Objective::Logistic,
            Objective::Auto => Objective::Softmax,
            other => other,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Objective::Auto => 0,
            Objective::Softmax => 1,
            Objective::Logistic => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Objective::Auto),
            1 => Some(Objective::Softmax),
            2 => Some(Objective::Logistic),
            _ => None,
        }
    }
}

/// Hyperparameters shared by the standard GBDT and the FreeGBDT heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub boosting_rounds: usize,
    pub num_classes: usize,
    pub l2_lambda: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_leaves: 256,
            boosting_rounds: 10,
            num_classes: 2,
            l2_lambda: 1.0,
            min_samples_leaf: 20,
            max_bins: 255,
            seed: 0,
            objective: Objective::Auto,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_leaves < 2 {
            return Err(invalid("max_leaves must be at least 2"));
        }
        if self.boosting_rounds < 1 {
            return Err(invalid("boosting_rounds must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid("num_classes must be at least 2"));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(invalid("l2_lambda must be nonnegative"));
        }
        if self.min_samples_leaf < 1 {
            return Err(invalid("min_samples_leaf must be at least 1"));
        }
        if !(2..=65535).contains(&self.max_bins) {
            return Err(invalid(format!("max_bins must lie in [2, 65535], got {}", self.max_bins)));
        }
        if self.objective == Objective::Logistic && self.num_classes != 2 {
            return Err(invalid("logistic objective requires exactly 2 classes"));
        }
        Ok(())
    }

    /// Number of score columns (trees per round).
    pub fn num_outputs(&self) -> usize {
        match self.objective.resolve(self.num_classes) {
            Objective::Logistic => 1,
            _ => self.num_classes,
        }
    }
}
