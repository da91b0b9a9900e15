//! `FGBM` single-file ensemble format.
//!
//! Layout (little-endian): magic `FGBM`, u32 version, parameter block,
//! u32 feature count, u32 + f64 init scores, u32 rounds, u32 trees per round,
//! then each tree as u32 root, u32 node count and a flat node array
//! `{u8 kind, u32 feature, u32 bin, f64 threshold, u32 left, u32 right, f64 value}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ensemble::Ensemble;
use super::params::{GbdtParams, Objective};
use super::tree::{Node, Tree};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FGBM";
pub const VERSION: u32 = 1;

const LEAF: u8 = 0;
const SPLIT: u8 = 1;

pub fn write_ensemble<W: Write>(ensemble: &Ensemble, out: W) -> Result<()> {
    let mut w = Writer::new(out);
    let p = &ensemble.params;
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.f64(p.learning_rate)?;
    w.usize32(p.max_leaves)?;
    w.usize32(p.boosting_rounds)?;
    w.usize32(p.num_classes)?;
    w.f64(p.l2_lambda)?;
    w.usize32(p.min_samples_leaf)?;
    w.usize32(p.max_bins)?;
    w.u64(p.seed)?;
    w.u8(p.objective.tag())?;
    w.usize32(ensemble.num_features)?;
    w.usize32(ensemble.init_scores.len())?;
    w.f64s(&ensemble.init_scores)?;
    w.usize32(ensemble.trees.len())?;
    w.usize32(ensemble.init_scores.len())?;
    for round in &ensemble.trees {
        for tree in round {
            w.usize32(tree.root)?;
            w.usize32(tree.nodes.len())?;
            for node in &tree.nodes {
                match *node {
                    Node::Split { feature, bin, threshold, left, right } => {
                        w.u8(SPLIT)?;
                        w.usize32(feature)?;
                        w.u32(bin as u32)?;
                        w.f64(threshold)?;
                        w.usize32(left)?;
                        w.usize32(right)?;
                        w.f64(0.0)?;
                    }
                    Node::Leaf { value } => {
                        w.u8(LEAF)?;
                        w.u32(0)?;
                        w.u32(0)?;
                        w.f64(0.0)?;
                        w.u32(0)?;
                        w.u32(0)?;
                        w.f64(value)?;
                    }
                }
            }
        }
    }
    w.into_inner().flush()?;
    Ok(())
}

pub fn read_ensemble<R: Read>(input: R) -> Result<Ensemble> {
    let mut r = Reader::new(input);
    r.header(MAGIC, VERSION)?;
    let learning_rate = r.f64()?;
    let max_leaves = r.usize32()?;
    let boosting_rounds = r.usize32()?;
    let num_classes = r.usize32()?;
    let l2_lambda = r.f64()?;
    let min_samples_leaf = r.usize32()?;
    let max_bins = r.usize32()?;
    let seed = r.u64()?;
    let tag = r.u8()?;
    let objective = Objective::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown objective tag {tag}")))?;
    let params = GbdtParams {
        learning_rate,
        max_leaves,
        boosting_rounds,
        num_classes,
        l2_lambda,
        min_samples_leaf,
        max_bins,
        seed,
        objective,
    };
    let num_features = r.usize32()?;
    let n_init = r.usize32()?;
    let init_scores = r.f64s(n_init)?;
    let rounds = r.usize32()?;
    let per_round = r.usize32()?;
    if per_round != n_init {
        return Err(Error::Format(format!("{per_round} trees per round but {n_init} init scores")));
    }
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut round = Vec::with_capacity(per_round);
        for _ in 0..per_round {
            let root = r.usize32()?;
            let count = r.usize32()?;
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let kind = r.u8()?;
                let feature = r.usize32()?;
                let bin = r.u32()?;
                let threshold = r.f64()?;
                let left = r.usize32()?;
                let right = r.usize32()?;
                let value = r.f64()?;
                nodes.push(match kind {
                    SPLIT => Node::Split {
                        feature,
                        bin: u16::try_from(bin).map_err(|_| Error::Format(format!("bin {bin} too large")))?,
                        threshold,
                        left,
                        right,
                    },
                    LEAF => Node::Leaf { value },
                    k => return Err(Error::Format(format!("unknown node kind {k}"))),
                });
            }
            let tree = Tree { nodes, root };
            if !tree.is_proper_binary_tree() {
                return Err(Error::Format("malformed tree".into()));
            }
            round.push(tree);
        }
        trees.push(round);
    }
    r.finish()?;
    Ok(Ensemble { params, num_features, init_scores, trees })
}

pub fn ensemble_to_bytes(ensemble: &Ensemble) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_ensemble(ensemble, &mut buf)?;
    Ok(buf)
}

pub fn save_ensemble(ensemble: &Ensemble, path: &Path) -> Result<()> {
    write_ensemble(ensemble, BufWriter::new(File::create(path)?))
}

pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    read_ensemble(BufReader::new(File::open(path)?))
}
