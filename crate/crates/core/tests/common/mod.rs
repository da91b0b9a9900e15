//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use freegbdt::data::TaskDataset;
use freegbdt::gbdt::{Ensemble, Node, Tree};
use freegbdt::nn::{adam_step, Activation};
use freegbdt::{EncoderConfig, FeatureRecord, FeatureStore, GbdtParams, ModelState, Objective, StoreSource};

// ---------------------------------------------------------------------------
// Greedy leaf-wise tree oracle working on raw values and cut points.

#[derive(Clone, Debug, PartialEq)]
pub enum OracleNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

struct OracleSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn sums(rows: &[usize], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    let mut g = 0.0;
    let mut h = 0.0;
    for &r in rows {
        g += grad[r];
        h += hess[r];
    }
    (g, h)
}

fn oracle_best(
    x: ArrayView2<'_, f64>,
    cuts: &[Vec<f64>],
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    min_leaf: usize,
) -> Option<OracleSplit> {
    let (g, h) = sums(rows, grad, hess);
    let parent = g * g / (h + lambda);
    let mut best: Option<OracleSplit> = None;
    for (f, fc) in cuts.iter().enumerate() {
        for &t in fc {
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x[[r, f]] <= t).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| x[[r, f]] > t).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let (gl, hl) = sums(&left, grad, hess);
            let (gr, hr) = sums(&right, grad, hess);
            let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(OracleSplit { feature: f, threshold: t, gain });
            }
        }
    }
    best
}

/// Exhaustive best-first growth: every candidate split is evaluated by
/// partitioning rows directly; the open leaf with the largest gain is split
/// next, ties going to the lowest node index; children are numbered in
/// creation order, left before right.
pub fn greedy_tree_oracle(
    x: ArrayView2<'_, f64>,
    cuts: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    min_leaf: usize,
    max_leaves: usize,
) -> Vec<OracleNode> {
    let n = x.nrows();
    let mut nodes = vec![OracleNode::Leaf { value: 0.0 }];
    let mut open: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    while open.len() < max_leaves {
        let mut choice: Option<(usize, OracleSplit)> = None;
        for (i, (node, rows)) in open.iter().enumerate() {
            if let Some(s) = oracle_best(x, cuts, rows, grad, hess, lambda, min_leaf) {
                let better = match &choice {
                    None => true,
                    Some((j, b)) => s.gain > b.gain || (s.gain == b.gain && *node < open[*j].0),
                };
                if better {
                    choice = Some((i, s));
                }
            }
        }
        let Some((i, split)) = choice else { break };
        let (node, rows) = open.remove(i);
        let left_rows: Vec<usize> =
            rows.iter().copied().filter(|&r| x[[r, split.feature]] <= split.threshold).collect();
        let right_rows: Vec<usize> =
            rows.iter().copied().filter(|&r| x[[r, split.feature]] > split.threshold).collect();
        let left = nodes.len();
        nodes[node] = OracleNode::Split { feature: split.feature, threshold: split.threshold, left, right: left + 1 };
        nodes.push(OracleNode::Leaf { value: 0.0 });
        nodes.push(OracleNode::Leaf { value: 0.0 });
        open.push((left, left_rows));
        open.push((left + 1, right_rows));
    }
    for (node, rows) in open {
        let (g, h) = sums(&rows, grad, hess);
        nodes[node] = OracleNode::Leaf { value: -g / (h + lambda) };
    }
    nodes
}

/// Exact structure and threshold match, leaf values within `tol`.
pub fn tree_matches_oracle(tree: &Tree, oracle: &[OracleNode], tol: f64) -> Result<(), String> {
    if tree.nodes.len() != oracle.len() || tree.root != 0 {
        return Err(format!("{} nodes vs oracle {}", tree.nodes.len(), oracle.len()));
    }
    for (i, (a, b)) in tree.nodes.iter().zip(oracle).enumerate() {
        match (a, b) {
            (
                Node::Split { feature, threshold, left, right, .. },
                OracleNode::Split { feature: f, threshold: t, left: l, right: r },
            ) => {
                if (feature, left, right) != (f, l, r) || threshold.to_bits() != t.to_bits() {
                    return Err(format!("node {i}: split {a:?} vs oracle {b:?}"));
                }
            }
            (Node::Leaf { value }, OracleNode::Leaf { value: v }) => {
                if (value - v).abs() > tol {
                    return Err(format!("node {i}: leaf {value} vs oracle {v}"));
                }
            }
            _ => return Err(format!("node {i}: {a:?} vs oracle {b:?}")),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Wilcoxon enumeration oracle.

/// Average ranks of `|d|` over nonzero `d`, using exact equality for ties.
pub fn oracle_ranks(diffs: &[f64]) -> Vec<(f64, bool)> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    nz.iter()
        .map(|&d| {
            let below = nz.iter().filter(|e| e.abs() < d.abs()).count() as f64;
            let equal = nz.iter().filter(|e| e.abs() == d.abs()).count() as f64;
            (below + (equal + 1.0) / 2.0, d > 0.0)
        })
        .collect()
}

/// Two-sided exact p by walking all `2^n` sign patterns.
pub fn enumeration_p(diffs: &[f64]) -> (f64, f64) {
    let ranked = oracle_ranks(diffs);
    let n = ranked.len();
    let doubled: Vec<i64> = ranked.iter().map(|(r, _)| (2.0 * r) as i64).collect();
    let total: i64 = doubled.iter().sum();
    let observed: i64 = ranked.iter().zip(&doubled).filter(|((_, pos), _)| *pos).map(|(_, d)| d).sum();
    let dev = (2 * observed - total).abs();
    let mut extreme: u64 = 0;
    for mask in 0u64..(1 << n) {
        let w: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
        if (2 * w - total).abs() >= dev {
            extreme += 1;
        }
    }
    (observed as f64 / 2.0, extreme as f64 / (1u64 << n) as f64)
}

// ---------------------------------------------------------------------------
// Fixed-point arbitrary-precision arithmetic.

pub const FRAC_BITS: u64 = 320;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(pub BigInt);

impl Fixed {
    pub fn one() -> Self {
        Fixed(BigInt::one() << FRAC_BITS)
    }

    /// Exact conversion of a finite double.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite());
        if v == 0.0 {
            return Fixed(BigInt::zero());
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
        let m = BigInt::from(mantissa) * sign;
        let shift = e + FRAC_BITS as i64;
        Fixed(if shift >= 0 { m << shift as u64 } else { m >> (-shift) as u64 })
    }

    pub fn from_int(v: i64) -> Self {
        Fixed(BigInt::from(v) << FRAC_BITS)
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 80 significant fractional bits; plenty for a double.
        let shifted: BigInt = &self.0 >> (FRAC_BITS - 80);
        shifted.to_f64().unwrap() / 2f64.powi(80)
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> FRAC_BITS)
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC_BITS) / &o.0)
    }

    pub fn div_int(&self, k: i64) -> Fixed {
        Fixed(&self.0 / BigInt::from(k))
    }

    pub fn sqrt(&self) -> Fixed {
        assert!(!self.0.is_negative());
        Fixed((&self.0 << FRAC_BITS).sqrt())
    }

    /// `atanh(y)` for `|y| < 1/2` by its power series.
    fn atanh(y: &Fixed) -> Fixed {
        let y2 = y.mul(y);
        let mut term = y.clone();
        let mut sum = Fixed(BigInt::zero());
        let mut k = 1;
        while !term.0.is_zero() {
            sum = sum.add(&term.div_int(k));
            term = term.mul(&y2);
            k += 2;
        }
        sum
    }

    pub fn ln2() -> Fixed {
        // ln 2 = 2 atanh(1/3)
        let third = Fixed::one().div_int(3);
        let a = Fixed::atanh(&third);
        a.add(&a)
    }

    pub fn ln(&self) -> Fixed {
        assert!(self.0 > BigInt::zero());
        // self = m * 2^e with m in [1, 2)
        let bits = self.0.bits() as i64;
        let e = bits - 1 - FRAC_BITS as i64;
        let m = if e >= 0 { Fixed(&self.0 >> e as u64) } else { Fixed(&self.0 << (-e) as u64) };
        let one = Fixed::one();
        let y = m.sub(&one).div(&m.add(&one));
        let a = Fixed::atanh(&y);
        let ln_m = a.add(&a);
        ln_m.add(&Fixed(&Fixed::ln2().0 * BigInt::from(e)))
    }

    pub fn exp(&self) -> Fixed {
        // x = k ln2 + r, |r| <= ln2 / 2
        let ln2 = Fixed::ln2();
        let k: BigInt = {
            let q: BigInt = (&self.0 << 1u32) / &ln2.0;
            let q = if q.is_negative() { q - 1 } else { q + 1 };
            q / 2
        };
        let r = self.sub(&Fixed(&ln2.0 * &k));
        let mut term = Fixed::one();
        let mut sum = Fixed::one();
        let mut i = 1;
        loop {
            term = term.mul(&r).div_int(i);
            if term.0.is_zero() {
                break;
            }
            sum = sum.add(&term);
            i += 1;
        }
        let k = k.to_i64().unwrap();
        if k >= 0 {
            Fixed(sum.0 << k as u64)
        } else {
            Fixed(sum.0 >> (-k) as u64)
        }
    }
}

/// Mean and unbiased standard deviation, evaluated in fixed point.
pub fn precise_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as i64;
    let xs: Vec<Fixed> = values.iter().map(|&v| Fixed::from_f64(v)).collect();
    let mean = xs.iter().fold(Fixed(BigInt::zero()), |a, x| a.add(x)).div_int(n);
    let ss = xs.iter().fold(Fixed(BigInt::zero()), |a, x| {
        let d = x.sub(&mean);
        a.add(&d.mul(&d))
    });
    (mean.to_f64(), ss.div_int(n - 1).sqrt().to_f64())
}

/// Mean softmax cross-entropy, evaluated in fixed point.
pub fn precise_cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let mut total = Fixed(BigInt::zero());
    for (i, &y) in labels.iter().enumerate() {
        let row: Vec<Fixed> = logits.row(i).iter().map(|&z| Fixed::from_f64(z)).collect();
        let sum = row.iter().fold(Fixed(BigInt::zero()), |a, z| a.add(&z.exp()));
        total = total.add(&sum.ln().sub(&row[y]));
    }
    total.div_int(labels.len() as i64).to_f64()
}

// ---------------------------------------------------------------------------
// Small datasets.

/// Gaussian-ish blobs around class-specific centers, with dev and test
/// splits, for quick pipeline runs.
pub fn blob_task(task_id: &str, seed: u64, sizes: [usize; 3], input_dim: usize, classes: usize) -> TaskDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Array2::from_shape_fn((classes, input_dim), |_| rng.gen_range(-1.0..1.0));
    let n: usize = sizes.iter().sum();
    let mut x = Array2::zeros((n, input_dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for j in 0..input_dim {
            x[[i, j]] = centers[[c, j]] + 0.6 * (rng.gen::<f64>() + rng.gen::<f64>() - 1.0);
        }
        labels.push(c);
    }
    let splits = (0..n)
        .map(|i| {
            if i < sizes[0] {
                freegbdt::data::Split::Train
            } else if i < sizes[0] + sizes[1] {
                freegbdt::data::Split::Dev
            } else {
                freegbdt::data::Split::Test
            }
        })
        .collect();
    TaskDataset::with_splits(task_id, x, labels, splits, classes).unwrap()
}

/// Central finite-difference gradient of `f` at `params`.
pub fn finite_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A random tree-growth problem within the oracle-checkable size limits:
/// n <= 256, p <= 16, max_bins <= 16, max_leaves <= 8.
pub struct TreeInstance {
    pub x: Array2<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub params: freegbdt::GbdtParams,
}

pub fn tree_instance(seed: u64) -> TreeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(8..=256);
    let p = rng.gen_range(1..=16);
    // Half of the columns are coarse so ties, empty bins and constant
    // columns all occur.
    let x = Array2::from_shape_fn((n, p), |(_, j)| {
        if j % 2 == 0 {
            rng.gen_range(-3.0..3.0)
        } else {
            rng.gen_range(0..(j + 2)) as f64
        }
    });
    let grad = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let hess = (0..n).map(|_| rng.gen_range(0.01..0.25)).collect();
    let params = freegbdt::GbdtParams {
        max_bins: rng.gen_range(2..=16),
        max_leaves: rng.gen_range(2..=8),
        min_samples_leaf: rng.gen_range(1..=10),
        l2_lambda: [0.0, 0.1, 1.0, 3.0][rng.gen_range(0..4)],
        ..Default::default()
    };
    TreeInstance { x, grad, hess, params }
}

/// Grow the instance's tree with the library and with the oracle and
/// compare them.
pub fn check_tree_instance(seed: u64) -> Result<(), String> {
    let inst = tree_instance(seed);
    let binned = freegbdt::gbdt::bin_features(inst.x.view(), inst.params.max_bins).map_err(|e| e.to_string())?;
    let tree = freegbdt::gbdt::grow_tree(&binned, &inst.grad, &inst.hess, &inst.params).map_err(|e| e.to_string())?;
    let oracle = greedy_tree_oracle(
        inst.x.view(),
        &binned.bin_upper_bounds,
        &inst.grad,
        &inst.hess,
        inst.params.l2_lambda,
        inst.params.min_samples_leaf,
        inst.params.max_leaves,
    );
    tree_matches_oracle(&tree, &oracle, 1e-12).map_err(|e| format!("seed {seed}: {e}"))
}

// ---------------------------------------------------------------------------
// Fixed objects behind the pinned binary files. Built without
// transcendental functions so the bytes do not depend on the platform libm.

pub fn golden_path(name: &str) -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn sample_ensemble() -> Ensemble {
    let stump = |feature, threshold: f64, lo: f64, hi: f64| Tree {
        nodes: vec![
            Node::Split { feature, bin: 2, threshold, left: 1, right: 2 },
            Node::Leaf { value: lo },
            Node::Leaf { value: hi },
        ],
        root: 0,
    };
    Ensemble {
        params: GbdtParams { num_classes: 3, objective: Objective::Softmax, boosting_rounds: 2, ..Default::default() },
        num_features: 4,
        init_scores: vec![-1.25, -0.5, -2.0],
        trees: vec![
            vec![stump(0, 0.5, 0.75, -0.25), stump(3, -1.5, 0.125, 0.5), Tree::single_leaf(0.0)],
            vec![stump(1, 2.25, -0.375, 1.0), Tree::single_leaf(0.0625), stump(2, 0.0, 0.25, -0.75)],
        ],
    }
}

pub fn sample_store() -> FeatureStore {
    let mut store = FeatureStore::new(3, 2, StoreSource::DuringTraining);
    for i in 0..6u64 {
        store
            .push(FeatureRecord {
                epoch: 1 + (i / 3) as u32,
                step: i / 2,
                sample_id: (i * 5) % 3,
                feature: vec![i as f32 * 0.5, -1.0 / (i as f32 + 1.0), f32::MIN_POSITIVE],
                label: (i % 2) as u32,
            })
            .unwrap();
    }
    store
}

pub fn sample_checkpoint() -> ModelState {
    let mut state = ModelState::new(EncoderConfig {
        input_dim: 3,
        hidden_dims: vec![4],
        feature_dim: 2,
        num_classes: 2,
        activation: Activation::Relu,
        dropout_rate: 0.25,
        seed: 77,
    })
    .unwrap();
    let grads: Vec<f64> = (0..state.params.len()).map(|i| (i as f64 - 10.0) * 0.125).collect();
    adam_step(&mut state, &grads, 0.01, 0.001).unwrap();
    adam_step(&mut state, &grads, 0.02, 0.001).unwrap();
    state
}
