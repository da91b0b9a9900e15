//! Values of one feature dimension across fine-tuning and after it.

use crate::error::{invalid, Result};
use crate::head::{FeatureStore, StoreSource};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub source: StoreSource,
    pub epoch: u32,
    pub step: u64,
    pub sample_id: u64,
    pub value: f32,
}

fn check(store: &FeatureStore, post: &FeatureStore, dimension: usize) -> Result<()> {
    if store.source != StoreSource::DuringTraining || post.source != StoreSource::PostTraining {
        return Err(invalid("trace needs a during-training store and a post-training store"));
    }
    if store.feature_dim != post.feature_dim {
        return Err(invalid("stores have different feature widths"));
    }
    if dimension >= store.feature_dim {
        return Err(invalid(format!("dimension {dimension} out of range for width {}", store.feature_dim)));
    }
    Ok(())
}

/// Every during-training value of `dimension`, followed by every
/// post-training value.
pub fn feature_trace(store: &FeatureStore, post: &FeatureStore, dimension: usize) -> Result<Vec<TraceRow>> {
    check(store, post, dimension)?;
    Ok(store
        .records
        .iter()
        .chain(&post.records)
        .zip(std::iter::repeat_n(store.source, store.len()).chain(std::iter::repeat(post.source)))
        .map(|(r, source)| TraceRow {
            source,
            epoch: r.epoch,
            step: r.step,
            sample_id: r.sample_id,
            value: r.feature[dimension],
        })
        .collect())
}

/// Per-epoch means of one dimension against its post-training mean.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSummary {
    pub dimension: usize,
    pub epoch_means: Vec<f64>,
    pub post_mean: f64,
}

impl DriftSummary {
    /// Distance to the post-training mean never grows from one epoch to
    /// the next.
    pub fn approaches_post_monotonically(&self) -> bool {
        self.gaps().windows(2).all(|w| w[1] <= w[0])
    }

    fn gaps(&self) -> Vec<f64> {
        self.epoch_means.iter().map(|m| (m - self.post_mean).abs()).collect()
    }

    /// Spearman correlation between epoch number and distance to the
    /// post-training mean; negative when the distance shrinks. `None` for
    /// fewer than two epochs or constant distances.
    pub fn trend(&self) -> Option<f64> {
        let gaps = self.gaps();
        let n = gaps.len();
        if n < 2 {
            return None;
        }
        let ranks = average_ranks(&gaps);
        let mean = (n as f64 + 1.0) / 2.0;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (i, r) in ranks.iter().enumerate() {
            let (dx, dy) = (i as f64 + 1.0 - mean, r - mean);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        (syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
    }

    /// The distance to the post-training mean trends down: `trend()` at or
    /// below [`DRIFT_TREND_THRESHOLD`].
    pub fn drifts_toward_post(&self) -> bool {
        self.trend().is_some_and(|r| r <= DRIFT_TREND_THRESHOLD)
    }
}

/// Rank correlation at or below which a dimension counts as drifting toward
/// its post-training mean.
pub const DRIFT_TREND_THRESHOLD: f64 = -0.5;

/// 1-based ranks, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn drift_summary(store: &FeatureStore, post: &FeatureStore, dimension: usize) -> Result<DriftSummary> {
    check(store, post, dimension)?;
    let epochs = store.records.iter().map(|r| r.epoch).max().unwrap_or(0) as usize;
    let mut sums = vec![(0.0f64, 0usize); epochs];
    for r in &store.records {
        let slot = &mut sums[r.epoch as usize - 1];
        slot.0 += r.feature[dimension] as f64;
        slot.1 += 1;
    }
    let post_mean = post.records.iter().map(|r| r.feature[dimension] as f64).sum::<f64>() / post.len().max(1) as f64;
    Ok(DriftSummary { dimension, epoch_means: sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect(), post_mean })
}

/// Fraction of dimensions whose per-epoch mean approaches the
/// post-training mean monotonically.
pub fn monotone_drift_fraction(store: &FeatureStore, post: &FeatureStore) -> Result<f64> {
    let mut hits = 0;
    for d in 0..store.feature_dim {
        hits += drift_summary(store, post, d)?.approaches_post_monotonically() as usize;
    }
    Ok(hits as f64 / store.feature_dim.max(1) as f64)
}

/// Fraction of dimensions whose distance to the post-training mean trends
/// down over the epochs (see [`DriftSummary::drifts_toward_post`]).
pub fn drift_fraction(store: &FeatureStore, post: &FeatureStore) -> Result<f64> {
    let mut hits = 0;
    for d in 0..store.feature_dim {
        hits += drift_summary(store, post, d)?.drifts_toward_post() as usize;
    }
    Ok(hits as f64 / store.feature_dim.max(1) as f64)
}
