use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Split, TaskDataset};
use crate::error::{invalid, Result};

/// Stratified train/dev/test assignment. `fractions` are the train, dev and
/// test shares; each class is divided separately using largest remainders,
/// ties going to the earlier split.
pub fn split_dataset(ds: &TaskDataset, fractions: [f64; 3], seed: u64) -> Result<TaskDataset> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(invalid("split fractions must lie in [0, 1]"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions sum to {total}, not 1")));
    }
    let used = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; ds.n()];
    for class in 0..ds.num_classes {
        let mut rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.labels[i] == class).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < used {
            return Err(invalid(format!(
                "class {class} has {} samples, fewer than the {used} requested splits",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let n = rows.len();
        let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if fractions[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        let mut it = rows.into_iter();
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for row in it.by_ref().take(count) {
                splits[row] = *split;
            }
        }
    }
    TaskDataset::with_splits(ds.task_id.clone(), ds.inputs.clone(), ds.labels.clone(), splits, ds.num_classes)
}
