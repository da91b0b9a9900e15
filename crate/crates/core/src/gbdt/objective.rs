//! First and second derivatives of the boosting losses.

use ndarray::{Array2, ArrayView2};

use super::params::Objective;
use crate::error::{Error, Result};

/// Numerically stable softmax of one score row, written into `out`.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    for (row, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { row, label, num_classes });
        }
    }
    Ok(())
}

/// Gradients and hessians of the log-loss with respect to raw scores.
///
/// For `Softmax` the score matrix has one column per class; for `Logistic`
/// it has a single column holding the log-odds of class 1.
pub fn compute_gradients(
    raw_scores: ArrayView2<'_, f64>,
    labels: &[usize],
    objective: Objective,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, k) = raw_scores.dim();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            actual: format!("{} labels", labels.len()),
        });
    }
    let mut grad = Array2::zeros((n, k));
    let mut hess = Array2::zeros((n, k));
    match objective.resolve(k.max(2)) {
        Objective::Logistic => {
            if k != 1 {
                return Err(Error::ShapeMismatch { expected: "1 score column".into(), actual: format!("{k} columns") });
            }
            check_labels(labels, 2)?;
            for i in 0..n {
                let p = sigmoid(raw_scores[[i, 0]]);
                grad[[i, 0]] = p - labels[i] as f64;
                hess[[i, 0]] = p * (1.0 - p);
            }
        }
        _ => {
            check_labels(labels, k)?;
            let mut p = vec![0.0; k];
            for i in 0..n {
                let row = raw_scores.row(i);
                softmax_into(row.as_slice().unwrap_or(&row.to_vec()), &mut p);
                for c in 0..k {
                    let y = if labels[i] == c { 1.0 } else { 0.0 };
                    grad[[i, c]] = p[c] - y;
                    hess[[i, c]] = p[c] * (1.0 - p[c]);
                }
            }
        }
    }
    Ok((grad, hess))
}

/// Mean negative log-likelihood of `labels` under the raw scores.
pub fn log_loss(raw_scores: ArrayView2<'_, f64>, labels: &[usize], objective: Objective) -> f64 {
    let (n, k) = raw_scores.dim();
    let mut total = 0.0;
    match objective.resolve(k.max(2)) {
        Objective::Logistic => {
            for i in 0..n {
                let s = raw_scores[[i, 0]];
                // -log sigmoid(s) = softplus(-s)
                let z = if labels[i] == 1 { -s } else { s };
                total += z.max(0.0) + (-z.abs()).exp().ln_1p();
            }
        }
        _ => {
            for i in 0..n {
                let row = raw_scores.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
                total += lse - row[labels[i]];
            }
        }
    }
    total / n as f64
}
