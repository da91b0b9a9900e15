//! Gradient histograms and split search.

use super::binning::BinnedDataset;

/// Newton-step loss reduction from splitting a node into `(G_L, H_L)` and
/// `(G_R, H_R)` under L2 leaf regularization `l2_lambda`.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, l2_lambda: f64) -> f64 {
    0.5 * (score(g_left, h_left, l2_lambda) + score(g_right, h_right, l2_lambda)
        - score(g_left + g_right, h_left + h_right, l2_lambda))
}

#[inline]
fn score(g: f64, h: f64, l2_lambda: f64) -> f64 {
    let d = h + l2_lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

/// Optimal leaf weight `-G / (H + lambda)`.
#[inline]
pub fn leaf_weight(g: f64, h: f64, l2_lambda: f64) -> f64 {
    let d = h + l2_lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

/// Summed gradient statistics of one histogram bin or node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradStats {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

/// Flat per-feature histogram of one node.
#[derive(Clone, Debug)]
pub struct Histogram {
    bins: Vec<GradStats>,
}

/// Where each feature's bins start in a flat histogram.
#[derive(Clone, Debug)]
pub struct HistogramLayout {
    offsets: Vec<usize>,
}

impl HistogramLayout {
    pub fn new(binned: &BinnedDataset) -> Self {
        let mut offsets = Vec::with_capacity(binned.n_features + 1);
        let mut total = 0;
        offsets.push(0);
        for f in 0..binned.n_features {
            total += binned.num_bins(f);
            offsets.push(total);
        }
        Self { offsets }
    }

    fn total_bins(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }
}

impl Histogram {
    /// Accumulate `rows` into a fresh histogram, in row order.
    pub fn build(layout: &HistogramLayout, binned: &BinnedDataset, rows: &[u32], grad: &[f64], hess: &[f64]) -> Self {
        let mut bins = vec![GradStats::default(); layout.total_bins()];
        for f in 0..binned.n_features {
            let column = binned.column(f);
            let hist = &mut bins[layout.offsets[f]..layout.offsets[f + 1]];
            for &r in rows {
                let r = r as usize;
                let b = &mut hist[column[r] as usize];
                b.grad += grad[r];
                b.hess += hess[r];
                b.count += 1;
            }
        }
        Self { bins }
    }

    /// `self - other`, used to derive the larger child from its parent.
    pub fn subtract(mut self, other: &Histogram) -> Self {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.grad -= b.grad;
            a.hess -= b.hess;
            a.count -= b.count;
        }
        self
    }
}

/// Relative gap under which two gains count as equal. Histogram sums depend
/// on summation order, so mathematically equal gains (for instance two
/// features inducing the same partition) can differ in the last bits.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

/// `a` is a strictly better gain than `b`, beyond rounding noise.
#[inline]
pub fn gain_beats(a: f64, b: f64) -> bool {
    a > b + GAIN_TIE_TOLERANCE * b.abs()
}

/// The best split of a node, if any split has positive gain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub bin: u16,
    pub gain: f64,
    pub left_count: u32,
}

/// Scan all (feature, bin) boundaries of `hist`. Ties go to the lowest
/// feature index, then the lowest bin.
pub fn best_split(
    layout: &HistogramLayout,
    hist: &Histogram,
    total: GradStats,
    l2_lambda: f64,
    min_samples_leaf: usize,
) -> Option<SplitCandidate> {
    let min = min_samples_leaf as u32;
    let mut best: Option<SplitCandidate> = None;
    for f in 0..layout.offsets.len() - 1 {
        let bins = &hist.bins[layout.offsets[f]..layout.offsets[f + 1]];
        let mut left = GradStats::default();
        for (b, stats) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
            left.grad += stats.grad;
            left.hess += stats.hess;
            left.count += stats.count;
            // An empty bin repeats the previous bin's partition.
            if stats.count == 0 {
                continue;
            }
            let right_count = total.count - left.count;
            if left.count < min || right_count < min {
                continue;
            }
            let gain = split_gain(left.grad, left.hess, total.grad - left.grad, total.hess - left.hess, l2_lambda);
            if gain > 0.0 && best.is_none_or(|s| gain_beats(gain, s.gain)) {
                best = Some(SplitCandidate { feature: f, bin: b as u16, gain, left_count: left.count });
            }
        }
    }
    best
}
