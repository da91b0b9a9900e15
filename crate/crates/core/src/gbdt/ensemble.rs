//! Boosted ensembles: training loop and prediction.

use ndarray::{Array2, ArrayView2};

use super::binning::bin_features;
use super::objective::{compute_gradients, log_loss, sigmoid, softmax_into};
use super::params::{GbdtParams, Objective};
use super::split::HistogramLayout;
use super::tree::{grow, Node, Tree};
use crate::error::{Error, Result};

/// Floor applied to class frequencies so absent classes get a finite prior.
pub const PRIOR_FLOOR: f64 = 1e-12;

/// A trained gradient boosted ensemble. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    /// Training parameters; `objective` is always resolved (never `Auto`).
    pub params: GbdtParams,
    pub num_features: usize,
    /// Prior raw score per output column.
    pub init_scores: Vec<f64>,
    /// `trees[round][output]`.
    pub trees: Vec<Vec<Tree>>,
}

/// An ensemble plus diagnostics gathered while building it.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub ensemble: Ensemble,
    /// Training log-loss of the prior (index 0) and after each round.
    pub train_loss: Vec<f64>,
    pub n_samples: usize,
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    for (row, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { row, label, num_classes });
        }
    }
    Ok(())
}

fn prior_scores(labels: &[usize], num_classes: usize, objective: Objective) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    let log_freq: Vec<f64> = counts.iter().map(|&c| (c as f64 / n).max(PRIOR_FLOOR).ln()).collect();
    match objective {
        Objective::Logistic => vec![log_freq[1] - log_freq[0]],
        _ => log_freq,
    }
}

/// Train an ensemble on rows in the order given. Rows are never reordered.
pub fn fit(features: ArrayView2<'_, f64>, labels: &[usize], params: &GbdtParams) -> Result<Ensemble> {
    fit_with_report(features, labels, params).map(|r| r.ensemble)
}

pub fn fit_with_report(features: ArrayView2<'_, f64>, labels: &[usize], params: &GbdtParams) -> Result<FitReport> {
    params.validate()?;
    let (n, p) = features.dim();
    if n < 2 {
        return Err(Error::Empty(format!("need at least 2 samples, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            actual: format!("{} labels", labels.len()),
        });
    }
    check_labels(labels, params.num_classes)?;

    let objective = params.objective.resolve(params.num_classes);
    let params = GbdtParams { objective, ..params.clone() };
    let outputs = params.num_outputs();
    let init_scores = prior_scores(labels, params.num_classes, objective);
    let mut scores = Array2::from_shape_fn((n, outputs), |(_, c)| init_scores[c]);
    let mut train_loss = vec![log_loss(scores.view(), labels, objective)];

    let single_class = labels.iter().all(|&y| y == labels[0]);
    if single_class {
        let trees = (0..params.boosting_rounds).map(|_| vec![Tree::single_leaf(0.0); outputs]).collect();
        train_loss.extend(std::iter::repeat_n(train_loss[0], params.boosting_rounds));
        return Ok(FitReport {
            ensemble: Ensemble { params, num_features: p, init_scores, trees },
            train_loss,
            n_samples: n,
        });
    }

    let binned = bin_features(features, params.max_bins)?;
    let layout = HistogramLayout::new(&binned);
    let mut trees = Vec::with_capacity(params.boosting_rounds);
    for round in 0..params.boosting_rounds {
        let (grad, hess) = compute_gradients(scores.view(), labels, objective)?;
        let mut round_trees = Vec::with_capacity(outputs);
        for c in 0..outputs {
            let g = grad.column(c).to_vec();
            let h = hess.column(c).to_vec();
            let grown = grow(&binned, &layout, &g, &h, &params)?;
            for &(node, start, end) in &grown.leaves {
                let Node::Leaf { value } = grown.tree.nodes[node] else { unreachable!("leaf ranges point at leaves") };
                let delta = params.learning_rate * value;
                for &r in &grown.rows[start..end] {
                    scores[[r as usize, c]] += delta;
                }
            }
            round_trees.push(grown.tree);
        }
        trees.push(round_trees);
        let loss = log_loss(scores.view(), labels, objective);
        log::trace!("round {} train loss {loss:.6}", round + 1);
        train_loss.push(loss);
    }

    Ok(FitReport { ensemble: Ensemble { params, num_features: p, init_scores, trees }, train_loss, n_samples: n })
}

impl Ensemble {
    /// An ensemble holding only the class prior.
    pub fn prior_only(labels: &[usize], num_features: usize, params: &GbdtParams) -> Result<Self> {
        params.validate()?;
        if labels.is_empty() {
            return Err(Error::Empty("no labels".into()));
        }
        check_labels(labels, params.num_classes)?;
        let objective = params.objective.resolve(params.num_classes);
        Ok(Self {
            params: GbdtParams { objective, ..params.clone() },
            num_features,
            init_scores: prior_scores(labels, params.num_classes, objective),
            trees: Vec::new(),
        })
    }

    pub fn num_rounds(&self) -> usize {
        self.trees.len()
    }

    /// The ensemble formed by the first `rounds` boosting rounds. Boosting is
    /// sequential, so this equals a fresh fit with `rounds` rounds.
    pub fn truncated(&self, rounds: usize) -> Self {
        let rounds = rounds.min(self.trees.len());
        Self {
            params: GbdtParams { boosting_rounds: rounds.max(1), ..self.params.clone() },
            num_features: self.num_features,
            init_scores: self.init_scores.clone(),
            trees: self.trees[..rounds].to_vec(),
        }
    }

    fn check_width(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.num_features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.num_features),
                actual: format!("{} features", features.ncols()),
            });
        }
        Ok(())
    }

    /// Raw scores: prior plus learning-rate-scaled leaf values.
    pub fn predict_raw(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(&features)?;
        let outputs = self.init_scores.len();
        let mut out = Array2::zeros((features.nrows(), outputs));
        let mut buf = vec![0.0; self.num_features];
        for (i, row) in features.rows().into_iter().enumerate() {
            let row: &[f64] = match row.as_slice() {
                Some(s) => s,
                None => {
                    buf.iter_mut().zip(row.iter()).for_each(|(b, &v)| *b = v);
                    &buf
                }
            };
            for c in 0..outputs {
                let mut s = self.init_scores[c];
                for round in &self.trees {
                    s += self.params.learning_rate * round[c].predict_row(row);
                }
                out[[i, c]] = s;
            }
        }
        Ok(out)
    }

    /// Predicted classes after each of the given round counts, computed in a
    /// single pass over the rounds. `rounds` beyond the ensemble's length
    /// are clamped.
    pub fn staged_predict_class(&self, features: ArrayView2<'_, f64>, rounds: &[usize]) -> Result<Vec<Vec<usize>>> {
        self.check_width(&features)?;
        let outputs = self.init_scores.len();
        let m = features.nrows();
        let rows: Vec<Vec<f64>> = features.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut raw = Array2::from_shape_fn((m, outputs), |(_, c)| self.init_scores[c]);
        let mut order: Vec<(usize, usize)> =
            rounds.iter().copied().enumerate().map(|(i, r)| (r.min(self.trees.len()), i)).collect();
        order.sort_unstable();
        let mut out = vec![Vec::new(); rounds.len()];
        let mut done = 0;
        for (target, slot) in order {
            while done < target {
                for (c, tree) in self.trees[done].iter().enumerate() {
                    for (i, row) in rows.iter().enumerate() {
                        raw[[i, c]] += self.params.learning_rate * tree.predict_row(row);
                    }
                }
                done += 1;
            }
            out[slot] = argmax_rows(&scores_to_proba(&raw, self.params.objective, self.params.num_classes));
        }
        Ok(out)
    }

    /// Class probabilities, one row per sample, each summing to 1.
    pub fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = self.predict_raw(features)?;
        Ok(scores_to_proba(&raw, self.params.objective, self.params.num_classes))
    }

    pub fn predict_class(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(features)?))
    }
}

pub(crate) fn scores_to_proba(raw: &Array2<f64>, objective: Objective, num_classes: usize) -> Array2<f64> {
    let n = raw.nrows();
    match objective {
        Objective::Logistic => Array2::from_shape_fn((n, 2), |(i, c)| {
            let p = sigmoid(raw[[i, 0]]);
            if c == 1 {
                p
            } else {
                1.0 - p
            }
        }),
        _ => {
            let mut out = Array2::zeros((n, num_classes));
            let mut p = vec![0.0; num_classes];
            for i in 0..n {
                let row: Vec<f64> = raw.row(i).to_vec();
                softmax_into(&row, &mut p);
                for c in 0..num_classes {
                    out[[i, c]] = p[c];
                }
            }
            out
        }
    }
}

/// Per-row argmax; ties go to the lowest class index.
pub fn argmax_rows(proba: &Array2<f64>) -> Vec<usize> {
    proba
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
