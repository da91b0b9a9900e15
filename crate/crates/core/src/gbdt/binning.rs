//! Quantile histogram binning.
//!
//! Each feature is cut at midpoints between distinct sorted values, so a bin
//! boundary never separates equal values and the result depends only on the
//! multiset of values in a column, not on row order.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Per-feature bin ordinals for a dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedDataset {
    /// Feature-major: `bin_index[f * n_samples + i]`.
    bin_index: Vec<u16>,
    /// Cut points per feature. A value `v` falls in the first bin whose
    /// upper bound is `>= v`; the last bin is unbounded above.
    pub bin_upper_bounds: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub n_features: usize,
}

impl BinnedDataset {
    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bin_index[feature * self.n_samples + row]
    }

    /// All bin ordinals of one feature, in row order.
    #[inline]
    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bin_index[feature * self.n_samples..(feature + 1) * self.n_samples]
    }

    pub fn num_bins(&self, feature: usize) -> usize {
        self.bin_upper_bounds[feature].len() + 1
    }

    /// Real-valued threshold for "go left if bin <= `bin`".
    pub fn threshold(&self, feature: usize, bin: u16) -> f64 {
        self.bin_upper_bounds[feature].get(bin as usize).copied().unwrap_or(f64::INFINITY)
    }

    /// Bin a matrix with previously fitted bounds.
    pub fn with_bounds(matrix: ArrayView2<'_, f64>, bounds: &[Vec<f64>]) -> Result<Self> {
        let (n, p) = matrix.dim();
        if p != bounds.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", bounds.len()),
                actual: format!("{p} features"),
            });
        }
        check_finite(matrix)?;
        let mut bin_index = Vec::with_capacity(n * p);
        for (f, cuts) in bounds.iter().enumerate() {
            bin_index.extend(matrix.column(f).iter().map(|&v| bin_of(cuts, v)));
        }
        Ok(Self { bin_index, bin_upper_bounds: bounds.to_vec(), n_samples: n, n_features: p })
    }
}

#[inline]
pub(crate) fn bin_of(cuts: &[f64], value: f64) -> u16 {
    cuts.partition_point(|&c| c < value) as u16
}

fn check_finite(matrix: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, column), v) in matrix.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, column });
        }
    }
    Ok(())
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= lo && m < hi {
        m
    } else {
        lo
    }
}

/// Cut points for one feature with at most `max_bins` bins.
pub fn quantile_cuts(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut distinct = sorted.clone();
    distinct.dedup();

    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }

    let mut cuts = Vec::with_capacity(max_bins - 1);
    for i in 1..max_bins {
        // round(i * n / max_bins) samples fall at or below this cut
        let k = (2 * i * n + max_bins) / (2 * max_bins);
        if k == 0 || k >= n {
            continue;
        }
        let boundary = if sorted[k - 1] != sorted[k] {
            Some(k)
        } else {
            // k sits inside a run of equal values; move to the nearer end
            let v = sorted[k];
            let start = sorted.partition_point(|&x| x < v);
            let end = sorted.partition_point(|&x| x <= v);
            let down = (start > 0).then_some(start);
            let up = (end < n).then_some(end);
            match (down, up) {
                (Some(s), Some(e)) => Some(if k - s < e - k { s } else { e }),
                (s, e) => s.or(e),
            }
        };
        if let Some(b) = boundary {
            let cut = midpoint(sorted[b - 1], sorted[b]);
            if cuts.last().is_none_or(|&last| cut > last) {
                cuts.push(cut);
            } else if !cuts.contains(&cut) {
                cuts.push(cut);
                cuts.sort_by(f64::total_cmp);
            }
        }
    }
    cuts
}

/// Quantile-bin every column of `matrix` into at most `max_bins` bins.
pub fn bin_features(matrix: ArrayView2<'_, f64>, max_bins: usize) -> Result<BinnedDataset> {
    let (n, p) = matrix.dim();
    if n == 0 || p == 0 {
        return Err(Error::Empty(format!("cannot bin a {n}x{p} matrix")));
    }
    if !(2..=65535).contains(&max_bins) {
        return Err(Error::InvalidParameter(format!("max_bins must lie in [2, 65535], got {max_bins}")));
    }
    check_finite(matrix)?;
    let bounds: Vec<Vec<f64>> = (0..p)
        .map(|f| {
            let col: Vec<f64> = matrix.column(f).to_vec();
            quantile_cuts(&col, max_bins)
        })
        .collect();
    BinnedDataset::with_bounds(matrix, &bounds)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn median_split_for_two_bins() {
        let m = array![[1.0], [2.0], [3.0], [4.0]];
        let b = bin_features(m.view(), 2).unwrap();
        assert_eq!(b.num_bins(0), 2);
        assert_eq!(b.bin_upper_bounds[0], vec![2.5]);
        assert_eq!(b.column(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn constant_column_is_one_bin() {
        let m = array![[5.0], [5.0], [5.0]];
        let b = bin_features(m.view(), 255).unwrap();
        assert_eq!(b.num_bins(0), 1);
        assert_eq!(b.column(0), &[0, 0, 0]);
    }

    #[test]
    fn rejects_non_finite_with_coordinates() {
        let m = array![[1.0, 2.0], [3.0, f64::NAN]];
        match bin_features(m.view(), 4) {
            Err(Error::NonFinite { row: 1, column: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Bin populations from exact quantile enumeration: the i-th cut sits
    /// after the round(i*n/B)-th smallest value.
    fn oracle_populations(values: &[f64], bins: usize) -> Vec<usize> {
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ranks: Vec<usize> = (1..bins).map(|i| ((i * n) as f64 / bins as f64).round() as usize).collect();
        let mut pops = vec![0; bins];
        for v in values {
            let pos = sorted.iter().position(|x| x == v).unwrap();
            let bin = ranks.iter().filter(|&&r| pos >= r).count();
            pops[bin] += 1;
        }
        pops
    }

    #[test]
    fn uniform_sample_populations_match_quantile_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
        let m = Array2::from_shape_vec((1000, 1), values.clone()).unwrap();
        let b = bin_features(m.view(), 255).unwrap();
        assert_eq!(b.num_bins(0), 255);
        let mut pops = vec![0usize; 255];
        for &bin in b.column(0) {
            pops[bin as usize] += 1;
        }
        assert_eq!(pops, oracle_populations(&values, 255));
        // 1000/255 = 3.92: every bin holds 3 or 4 samples.
        let ideal = 1000.0 / 255.0;
        for &c in &pops[1..254] {
            assert!((c as f64 - ideal).abs() < 1.0, "population {c}");
        }
    }

    #[test]
    fn ties_never_straddle_a_cut() {
        let values = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0, 5.0, 6.0];
        let cuts = quantile_cuts(&values, 3);
        for c in &cuts {
            assert!(!values.contains(c));
        }
        let m = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        let b = BinnedDataset::with_bounds(m.view(), &[cuts]).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] == values[j] {
                    assert_eq!(b.bin(i, 0), b.bin(j, 0));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rebinning_is_idempotent(
            values in proptest::collection::vec(-50i32..50, 1..200),
            max_bins in 2usize..40,
        ) {
            let col: Vec<f64> = values.iter().map(|&v| v as f64 * 0.25).collect();
            let n = col.len();
            let m = Array2::from_shape_vec((n, 1), col.clone()).unwrap();
            let b = bin_features(m.view(), max_bins).unwrap();
            prop_assert!(b.num_bins(0) <= max_bins);
            prop_assert!(b.bin_upper_bounds[0].windows(2).all(|w| w[0] < w[1]));
            let again = BinnedDataset::with_bounds(m.view(), &b.bin_upper_bounds).unwrap();
            prop_assert_eq!(again.column(0), b.column(0));
            // Replace each value by the upper bound of its bin and re-bin.
            let rebuilt: Vec<f64> = (0..n)
                .map(|i| {
                    let t = b.threshold(0, b.bin(i, 0));
                    if t.is_finite() { t } else { col[i] }
                })
                .collect();
            let m2 = Array2::from_shape_vec((n, 1), rebuilt).unwrap();
            let again = BinnedDataset::with_bounds(m2.view(), &b.bin_upper_bounds).unwrap();
            prop_assert_eq!(again.column(0), b.column(0));
        }

        #[test]
        fn binning_ignores_row_order(
            values in proptest::collection::vec(-20i32..20, 2..100),
            max_bins in 2usize..16,
        ) {
            let col: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let mut rev = col.clone();
            rev.reverse();
            prop_assert_eq!(quantile_cuts(&col, max_bins), quantile_cuts(&rev, max_bins));
        }
    }
}
