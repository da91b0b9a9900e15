use crate::error::{Error, Result};

fn check_lengths(pred: &[usize], gold: &[usize]) -> Result<()> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} predictions (at least one)", gold.len()),
            actual: format!("{} predictions", pred.len()),
        });
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    check_lengths(pred, gold)?;
    let hits = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// An F1 score, flagged when precision or recall had a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1 {
    pub value: f64,
    pub zero_division: bool,
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> F1 {
    if tp + fp == 0 || tp + fn_ == 0 {
        return F1 { value: 0.0, zero_division: true };
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    if precision + recall == 0.0 {
        return F1 { value: 0.0, zero_division: false };
    }
    F1 { value: 2.0 * precision * recall / (precision + recall), zero_division: false }
}

fn counts(pred: &[usize], gold: &[usize], class: usize) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &g) in pred.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

pub fn f1_binary(pred: &[usize], gold: &[usize], positive_class: usize) -> Result<F1> {
    check_lengths(pred, gold)?;
    let (tp, fp, fn_) = counts(pred, gold, positive_class);
    Ok(f1_from_counts(tp, fp, fn_))
}

/// Unweighted mean of per-class F1 over every class seen in either vector.
pub fn macro_f1(pred: &[usize], gold: &[usize]) -> Result<F1> {
    check_lengths(pred, gold)?;
    let k = pred.iter().chain(gold).copied().max().unwrap_or(0) + 1;
    let mut seen = vec![false; k];
    pred.iter().chain(gold).for_each(|&c| seen[c] = true);
    let mut sum = 0.0;
    let mut classes = 0;
    let mut zero_division = false;
    for class in (0..k).filter(|&c| seen[c]) {
        let (tp, fp, fn_) = counts(pred, gold, class);
        let f = f1_from_counts(tp, fp, fn_);
        zero_division |= f.zero_division;
        sum += f.value;
        classes += 1;
    }
    Ok(F1 { value: sum / classes as f64, zero_division })
}

/// Mean of macro F1 and accuracy, the convention used for CB.
pub fn cb_metric(pred: &[usize], gold: &[usize]) -> Result<f64> {
    Ok(0.5 * (macro_f1(pred, gold)?.value + accuracy(pred, gold)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Unbiased (n - 1) standard deviation; 0 when only one value exists.
    pub std: f64,
    pub std_defined: bool,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::Empty("mean of an empty list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(MeanStd { mean, std: 0.0, std_defined: false, n });
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(MeanStd { mean, std: (ss / (n - 1) as f64).sqrt(), std_defined: true, n })
}
