//! Regression trees and leaf-wise (best-first) growth.

use super::binning::BinnedDataset;
use super::params::GbdtParams;
use super::split::{best_split, gain_beats, leaf_weight, GradStats, Histogram, HistogramLayout, SplitCandidate};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with bin ordinal `<= bin` go left.
        bin: u16,
        /// Equivalent real-valued rule: `x <= threshold` goes left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub root: usize,
}

impl Tree {
    pub fn single_leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }], root: 0 }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf reached by a raw feature row.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Unscaled leaf value for a raw feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Leaf reached by a training row, routed on bin ordinals.
    pub fn leaf_index_binned(&self, binned: &BinnedDataset, row: usize) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                Node::Split { feature, bin, left, right, .. } => {
                    i = if binned.bin(row, feature) <= bin { left } else { right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Checks that every node is reachable from the root exactly once.
    pub fn is_proper_binary_tree(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct OpenLeaf {
    node: usize,
    start: usize,
    end: usize,
    stats: GradStats,
    hist: Option<Histogram>,
    split: Option<SplitCandidate>,
}

/// A grown tree plus the training rows that landed in each leaf.
pub(crate) struct GrownTree {
    pub tree: Tree,
    /// Row indices, grouped contiguously by leaf.
    pub rows: Vec<u32>,
    /// `(leaf node, start, end)` ranges into `rows`.
    pub leaves: Vec<(usize, usize, usize)>,
}

fn direct_stats(rows: &[u32], grad: &[f64], hess: &[f64]) -> GradStats {
    let mut s = GradStats::default();
    for &r in rows {
        s.grad += grad[r as usize];
        s.hess += hess[r as usize];
        s.count += 1;
    }
    s
}

/// Grow one tree leaf-wise: always split the open leaf with the largest
/// positive gain until `max_leaves` leaves exist or no valid split remains.
pub fn grow_tree(binned: &BinnedDataset, grad: &[f64], hess: &[f64], params: &GbdtParams) -> Result<Tree> {
    let layout = HistogramLayout::new(binned);
    grow(binned, &layout, grad, hess, params).map(|g| g.tree)
}

pub(crate) fn grow(
    binned: &BinnedDataset,
    layout: &HistogramLayout,
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> Result<GrownTree> {
    let n = binned.n_samples;
    if n == 0 {
        return Err(Error::Empty("cannot grow a tree on zero samples".into()));
    }
    if grad.len() != n || hess.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} gradients and hessians"),
            actual: format!("{} and {}", grad.len(), hess.len()),
        });
    }
    let lambda = params.l2_lambda;
    let min_leaf = params.min_samples_leaf;
    let splittable = |count: u32| count as usize >= 2 * min_leaf;

    let mut rows: Vec<u32> = (0..n as u32).collect();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let root_stats = direct_stats(&rows, grad, hess);
    let mut root = OpenLeaf { node: 0, start: 0, end: n, stats: root_stats, hist: None, split: None };
    if splittable(root_stats.count) {
        let hist = Histogram::build(layout, binned, &rows, grad, hess);
        root.split = best_split(layout, &hist, root_stats, lambda, min_leaf);
        root.hist = Some(hist);
    }
    let mut open = vec![root];
    let mut num_leaves = 1;
    let mut scratch: Vec<u32> = Vec::with_capacity(n);

    while num_leaves < params.max_leaves {
        // Highest gain wins; ties go to the earliest-created leaf.
        let mut pick: Option<usize> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(s) = leaf.split {
                let better = match pick {
                    None => true,
                    Some(j) => {
                        let other = open[j].split.unwrap();
                        gain_beats(s.gain, other.gain) || (!gain_beats(other.gain, s.gain) && leaf.node < open[j].node)
                    }
                };
                if better {
                    pick = Some(i);
                }
            }
        }
        let Some(pick) = pick else { break };
        let parent = open.swap_remove(pick);
        let split = parent.split.unwrap();

        // Stable partition of the parent's rows.
        let column = binned.column(split.feature);
        let segment = &mut rows[parent.start..parent.end];
        scratch.clear();
        let mut write = 0;
        for i in 0..segment.len() {
            let r = segment[i];
            if column[r as usize] <= split.bin {
                segment[write] = r;
                write += 1;
            } else {
                scratch.push(r);
            }
        }
        segment[write..].copy_from_slice(&scratch);
        debug_assert_eq!(write as u32, split.left_count);
        let mid = parent.start + write;

        let left_node = nodes.len();
        let right_node = left_node + 1;
        nodes[parent.node] = Node::Split {
            feature: split.feature,
            bin: split.bin,
            threshold: binned.threshold(split.feature, split.bin),
            left: left_node,
            right: right_node,
        };
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        num_leaves += 1;

        let left_rows = &rows[parent.start..mid];
        let right_rows = &rows[mid..parent.end];
        let left_stats = direct_stats(left_rows, grad, hess);
        let right_stats = direct_stats(right_rows, grad, hess);
        let mut left =
            OpenLeaf { node: left_node, start: parent.start, end: mid, stats: left_stats, hist: None, split: None };
        let mut right =
            OpenLeaf { node: right_node, start: mid, end: parent.end, stats: right_stats, hist: None, split: None };

        let left_smaller = left_stats.count <= right_stats.count;
        let (small, large) = if left_smaller { (&mut left, &mut right) } else { (&mut right, &mut left) };
        if splittable(large.stats.count) && num_leaves < params.max_leaves {
            let parent_hist = parent.hist.expect("split leaves carry a histogram");
            let small_rows = &rows[small.start..small.end];
            let small_hist = Histogram::build(layout, binned, small_rows, grad, hess);
            let large_hist = parent_hist.subtract(&small_hist);
            if splittable(small.stats.count) {
                small.split = best_split(layout, &small_hist, small.stats, lambda, min_leaf);
                small.hist = Some(small_hist);
            }
            large.split = best_split(layout, &large_hist, large.stats, lambda, min_leaf);
            large.hist = Some(large_hist);
        }
        open.push(left);
        open.push(right);
    }

    let mut leaves = Vec::with_capacity(open.len());
    for leaf in &open {
        nodes[leaf.node] = Node::Leaf { value: leaf_weight(leaf.stats.grad, leaf.stats.hess, lambda) };
        leaves.push((leaf.node, leaf.start, leaf.end));
    }
    leaves.sort_unstable();
    Ok(GrownTree { tree: Tree { nodes, root: 0 }, rows, leaves })
}
