//! Desk-scale task suites with a shared latent structure.
//!
//! Every sample starts as a point `z` drawn around one of a fixed set of
//! Gaussian class centers in a low-dimensional latent space and is observed
//! through a shared nonlinear projection `x = tanh(P z) + noise`. The parent
//! task asks for the latent class itself. Each child task applies its own
//! random rotation to `z` before the projection, groups latent classes into
//! its own label set and flips a fraction of labels. An encoder trained on
//! the parent therefore carries over to the children.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::csv_io::{load_dataset_csv, write_dataset_csv, CsvSchema};
use super::dataset::{Split, TaskDataset};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChildTaskSpec {
    pub name: String,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub num_classes: usize,
    pub rotation_seed: u64,
    pub label_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSuiteSpec {
    pub latent_dim: usize,
    pub num_latent_classes: usize,
    /// Standard deviation of the class centers around the origin.
    pub center_spread: f64,
    /// Standard deviation of samples around their class center.
    pub latent_noise: f64,
    pub input_dim: usize,
    /// Standard deviation of additive noise on the observed inputs.
    pub input_noise: f64,
    /// Size of the random perturbation turned into each child's rotation;
    /// 0 keeps the parent's geometry.
    pub rotation_strength: f64,
    pub parent_size: usize,
    pub children: Vec<ChildTaskSpec>,
    pub seed: u64,
}

impl Default for SyntheticSuiteSpec {
    fn default() -> Self {
        let child = |name: &str, train, dev, test, k, rot| ChildTaskSpec {
            name: name.into(),
            train_size: train,
            dev_size: dev,
            test_size: test,
            num_classes: k,
            rotation_seed: rot,
            label_noise: 0.1,
        };
        Self {
            latent_dim: 8,
            num_latent_classes: 6,
            center_spread: 1.0,
            latent_noise: 1.0,
            input_dim: 32,
            input_noise: 0.1,
            rotation_strength: 0.3,
            parent_size: 4000,
            children: vec![
                child("cb", 250, 57, 250, 3, 101),
                child("rte", 2500, 278, 3000, 2, 202),
                child("cnli", 6600, 800, 1600, 3, 303),
            ],
            seed: 2021,
        }
    }
}

impl SyntheticSuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.input_dim == 0 {
            return Err(invalid("latent_dim and input_dim must be positive"));
        }
        if self.num_latent_classes < 2 {
            return Err(invalid("need at least 2 latent classes"));
        }
        if self.parent_size < 2 * self.num_latent_classes {
            return Err(invalid("parent task is smaller than twice its class count"));
        }
        for c in &self.children {
            if c.num_classes < 2 || c.num_classes > self.num_latent_classes {
                return Err(invalid(format!(
                    "child {} needs between 2 and {} classes",
                    c.name, self.num_latent_classes
                )));
            }
            if c.train_size < 2 * c.num_classes {
                return Err(invalid(format!(
                    "child {} has {} training samples for {} classes",
                    c.name, c.train_size, c.num_classes
                )));
            }
            if !(0.0..0.5).contains(&c.label_noise) {
                return Err(invalid(format!("child {} label noise must lie in [0, 0.5)", c.name)));
            }
        }
        Ok(())
    }
}

/// Ground truth kept alongside each generated child, for checking the
/// generator itself.
#[derive(Clone, Debug)]
pub struct ChildTruth {
    /// Latent point of every row, before rotation.
    pub latents: Array2<f64>,
    pub latent_classes: Vec<usize>,
    /// Labels before noise was applied.
    pub clean_labels: Vec<usize>,
    /// Child class of each latent class.
    pub class_map: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSuite {
    pub parent: TaskDataset,
    pub children: Vec<TaskDataset>,
    pub centers: Array2<f64>,
    pub truth: Vec<ChildTruth>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormalize the columns of `I + strength * G` (Gram-Schmidt).
fn random_rotation(rng: &mut ChaCha8Rng, dim: usize, strength: f64) -> Array2<f64> {
    let mut m = gaussian_matrix(rng, dim, dim, strength);
    for i in 0..dim {
        m[[i, i]] += 1.0;
    }
    for j in 0..dim {
        for k in 0..j {
            let dot: f64 = (0..dim).map(|i| m[[i, j]] * m[[i, k]]).sum();
            for i in 0..dim {
                m[[i, j]] -= dot * m[[i, k]];
            }
        }
        let norm: f64 = (0..dim).map(|i| m[[i, j]] * m[[i, j]]).sum::<f64>().sqrt();
        for i in 0..dim {
            m[[i, j]] /= norm;
        }
    }
    m
}

struct World {
    centers: Array2<f64>,
    projection: Array2<f64>,
}

impl World {
    fn sample_latent(&self, rng: &mut ChaCha8Rng, spec: &SyntheticSuiteSpec) -> (usize, Array1<f64>) {
        let class = rng.gen_range(0..spec.num_latent_classes);
        let z = Array1::from_shape_fn(spec.latent_dim, |d| {
            self.centers[[class, d]] + spec.latent_noise * rng.sample::<f64, _>(StandardNormal)
        });
        (class, z)
    }

    fn observe(&self, rng: &mut ChaCha8Rng, spec: &SyntheticSuiteSpec, z: &Array1<f64>) -> Array1<f64> {
        let mut x = self.projection.dot(z);
        x.mapv_inplace(|v| v.tanh() + spec.input_noise * rng.sample::<f64, _>(StandardNormal));
        x
    }
}

/// Build the parent task and every child task. A pure function of `spec`.
pub fn generate_synthetic_suite(spec: &SyntheticSuiteSpec) -> Result<SyntheticSuite> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = gaussian_matrix(&mut rng, spec.num_latent_classes, spec.latent_dim, spec.center_spread);
    let projection = gaussian_matrix(
        &mut rng,
        spec.input_dim,
        spec.latent_dim,
        1.5 / (spec.latent_dim as f64 * (spec.center_spread.powi(2) + spec.latent_noise.powi(2))).sqrt(),
    );
    let world = World { centers, projection };

    let mut parent_x = Array2::zeros((spec.parent_size, spec.input_dim));
    let mut parent_y = Vec::with_capacity(spec.parent_size);
    for i in 0..spec.parent_size {
        let (class, z) = world.sample_latent(&mut rng, spec);
        parent_x.row_mut(i).assign(&world.observe(&mut rng, spec, &z));
        parent_y.push(class);
    }
    let parent = TaskDataset::new("parent", parent_x, parent_y, spec.num_latent_classes)?;

    let mut children = Vec::with_capacity(spec.children.len());
    let mut truth = Vec::with_capacity(spec.children.len());
    for child in &spec.children {
        let mut crng = ChaCha8Rng::seed_from_u64(child.rotation_seed ^ spec.seed.rotate_left(17));
        let rotation = random_rotation(&mut crng, spec.latent_dim, spec.rotation_strength);
        let mut latent_order: Vec<usize> = (0..spec.num_latent_classes).collect();
        latent_order.shuffle(&mut crng);
        let mut class_map = vec![0; spec.num_latent_classes];
        for (i, &c) in latent_order.iter().enumerate() {
            class_map[c] = i % child.num_classes;
        }

        let n = child.train_size + child.dev_size + child.test_size;
        let mut x = Array2::zeros((n, spec.input_dim));
        let mut latents = Array2::zeros((n, spec.latent_dim));
        let mut latent_classes = Vec::with_capacity(n);
        let mut clean = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let (class, z) = world.sample_latent(&mut crng, spec);
            let rotated = rotation.dot(&z);
            x.row_mut(i).assign(&world.observe(&mut crng, spec, &rotated));
            latents.row_mut(i).assign(&z);
            latent_classes.push(class);
            let y = class_map[class];
            clean.push(y);
            let noisy = if crng.gen::<f64>() < child.label_noise {
                let other = crng.gen_range(0..child.num_classes - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            };
            labels.push(noisy);
        }
        let splits = (0..n)
            .map(|i| {
                if i < child.train_size {
                    Split::Train
                } else if i < child.train_size + child.dev_size {
                    Split::Dev
                } else {
                    Split::Test
                }
            })
            .collect();
        let ds = TaskDataset::with_splits(child.name.clone(), x, labels, splits, child.num_classes)
            .map_err(|e| invalid(format!("child {} is infeasible: {e}", child.name)))?;
        children.push(ds);
        truth.push(ChildTruth { latents, latent_classes, clean_labels: clean, class_map });
    }
    Ok(SyntheticSuite { parent, children, centers: world.centers, truth })
}

pub const MANIFEST: &str = "suite.manifest";

/// Write the suite as CSV files plus a key-value manifest describing the
/// generating spec.
pub fn write_suite(suite: &SyntheticSuite, spec: &SyntheticSuiteSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut kv: Vec<(String, String)> = vec![
        ("seed".into(), spec.seed.to_string()),
        ("latent_dim".into(), spec.latent_dim.to_string()),
        ("num_latent_classes".into(), spec.num_latent_classes.to_string()),
        ("center_spread".into(), format!("{:?}", spec.center_spread)),
        ("latent_noise".into(), format!("{:?}", spec.latent_noise)),
        ("input_dim".into(), spec.input_dim.to_string()),
        ("input_noise".into(), format!("{:?}", spec.input_noise)),
        ("rotation_strength".into(), format!("{:?}", spec.rotation_strength)),
        ("parent_size".into(), spec.parent_size.to_string()),
        ("parent".into(), "parent.csv".into()),
        ("children".into(), spec.children.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",")),
    ];
    for c in &spec.children {
        let p = format!("child.{}.", c.name);
        kv.push((p.clone() + "train_size", c.train_size.to_string()));
        kv.push((p.clone() + "dev_size", c.dev_size.to_string()));
        kv.push((p.clone() + "test_size", c.test_size.to_string()));
        kv.push((p.clone() + "num_classes", c.num_classes.to_string()));
        kv.push((p.clone() + "rotation_seed", c.rotation_seed.to_string()));
        kv.push((p + "label_noise", format!("{:?}", c.label_noise)));
    }
    let text: String = kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(dir.join(MANIFEST), text)?;

    write_dataset_csv(&suite.parent, &dir.join("parent.csv"))?;
    for ds in &suite.children {
        for split in Split::ALL {
            let part = ds.split(split);
            if part.is_empty() {
                continue;
            }
            let sub = TaskDataset::new(ds.task_id.clone(), part.inputs, part.labels, ds.num_classes)?;
            write_dataset_csv(&sub, &dir.join(format!("{}_{}.csv", ds.task_id, split.as_str())))?;
        }
    }
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    let mut kv = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

/// Load a suite written by [`write_suite`]: the parent task and each child
/// with its train, dev and test rows concatenated in that order.
pub fn load_suite(dir: &Path) -> Result<(TaskDataset, Vec<TaskDataset>)> {
    let kv = read_manifest(dir)?;
    let get = |k: &str| kv.get(k).cloned().ok_or_else(|| Error::Format(format!("manifest is missing `{k}`")));
    let num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Format(format!("manifest value for `{k}` is not an integer")))
    };
    let parent_classes = num("num_latent_classes")?;
    let parent = load_dataset_csv(&dir.join(get("parent")?), &CsvSchema::new("parent").with_classes(parent_classes))?;
    let mut children = Vec::new();
    for name in get("children")?.split(',').filter(|s| !s.is_empty()) {
        let k = num(&format!("child.{name}.num_classes"))?;
        let schema = CsvSchema::new(name).with_classes(k);
        // Zero-size splits have no file.
        let mut parts = Vec::new();
        for split in Split::ALL {
            if num(&format!("child.{name}.{}_size", split.as_str()))? > 0 {
                let path = dir.join(format!("{name}_{}.csv", split.as_str()));
                parts.push((split, load_dataset_csv(&path, &schema)?));
            }
        }
        let views: Vec<_> = parts.iter().map(|(_, d)| d.inputs.view()).collect();
        let inputs =
            ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Format(format!("child {name}: {e}")))?;
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for (split, part) in &parts {
            labels.extend(&part.labels);
            splits.extend(std::iter::repeat_n(*split, part.n()));
        }
        children.push(TaskDataset::with_splits(name, inputs, labels, splits, k)?);
    }
    Ok((parent, children))
}
