//! Wilcoxon signed-rank test on paired differences.
//!
//! Zero differences are dropped before ranking. Tied absolute differences
//! share the average of their ranks. For up to [`EXACT_MAX_N`] nonzero
//! differences the two-sided p-value is exact, computed from the full null
//! distribution of `W+` over all `2^n` sign assignments. Larger samples use
//! the normal approximation with tie and continuity corrections.

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 20;

/// Relative tolerance under which two absolute differences count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

impl PValueMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PValueMethod::Exact => "exact",
            PValueMethod::NormalApproximation => "normal_approximation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_two_sided: f64,
    pub n_effective: usize,
    pub n_zeros: usize,
    pub method: PValueMethod,
}

/// Ranks of the nonzero absolute differences (average ranks for ties) with
/// the sign of each difference.
pub fn signed_ranks(diffs: &[f64]) -> Vec<(f64, bool)> {
    let mut nonzero: Vec<(f64, bool)> = diffs.iter().filter(|&&d| d != 0.0).map(|&d| (d.abs(), d > 0.0)).collect();
    nonzero.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = nonzero.len();
    let mut ranked = vec![(0.0, false); n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nonzero[j].0 - nonzero[i].0 <= TIE_TOLERANCE * nonzero[j].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let rank = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            ranked[k] = (rank, nonzero[k].1);
        }
        i = j;
    }
    ranked
}

/// Exact two-sided p-value of `w_plus` given the (possibly tied) ranks.
///
/// Ranks are averages of integers, so doubling makes them integral and the
/// null distribution of `2 W+` is counted exactly by subset-sum dynamic
/// programming.
pub fn exact_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let observed = (2.0 * w_plus).round() as i64;
    let center = total as i64;
    let dev = (2 * observed - center).abs();
    let extreme: u128 =
        counts.iter().enumerate().filter(|&(s, _)| (2 * s as i64 - center).abs() >= dev).map(|(_, &c)| c).sum();
    let all = 1u128 << doubled.len();
    (extreme as f64 / all as f64).min(1.0)
}

/// Normal approximation with tie correction and continuity correction.
pub fn normal_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)).min(1.0)
}

pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite difference {d}")));
    }
    let ranked = signed_ranks(diffs);
    if ranked.is_empty() {
        return Err(Error::NoNonzeroDifferences);
    }
    let w_plus: f64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
    let w_minus: f64 = ranked.iter().filter(|r| !r.1).map(|r| r.0).sum();
    let ranks: Vec<f64> = ranked.iter().map(|r| r.0).collect();
    let n = ranks.len();
    let (p, method) = if n <= EXACT_MAX_N {
        (exact_p_value(&ranks, w_plus), PValueMethod::Exact)
    } else {
        (normal_p_value(&ranks, w_plus), PValueMethod::NormalApproximation)
    };
    Ok(WilcoxonResult { w_plus, w_minus, p_two_sided: p, n_effective: n, n_zeros: diffs.len() - n, method })
}
