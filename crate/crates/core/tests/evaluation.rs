mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use freegbdt::eval::report::{read_results_csv, report_csv, results_csv};
use freegbdt::eval::wilcoxon::{normal_p_value, signed_ranks};
use freegbdt::eval::*;
use freegbdt::head::{extract_features_post, fine_tune_accumulate, ForwardCounter};
use freegbdt::{EncoderConfig, GbdtParams, HeadKind, ModelState, TrainConfig};

#[test]
fn mean_std_matches_high_precision_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let values: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
    let fast = mean_std(&values).unwrap();
    let (mean, std) = common::precise_mean_std(&values);
    assert!((fast.mean - mean).abs() < 1e-12);
    assert!((fast.std - std).abs() < 1e-12);
}

proptest! {
    #[test]
    fn wilcoxon_matches_enumeration(diffs in proptest::collection::vec(-6i32..=6, 1..=12)) {
        let diffs: Vec<f64> = diffs.into_iter().map(|d| d as f64 * 0.25).collect();
        prop_assume!(diffs.iter().any(|&d| d != 0.0));
        let r = wilcoxon_signed_rank(&diffs).unwrap();
        let (w, p) = common::enumeration_p(&diffs);
        prop_assert_eq!(r.w_plus, w);
        prop_assert_eq!(r.p_two_sided, p);
        prop_assert_eq!(r.n_effective, diffs.iter().filter(|&&d| d != 0.0).count());
    }

    #[test]
    fn metrics_stay_in_unit_interval(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..40)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        for v in [accuracy(&pred, &gold).unwrap(), cb_metric(&pred, &gold).unwrap(), macro_f1(&pred, &gold).unwrap().value,
                  f1_binary(&pred, &gold, 1).unwrap().value] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(accuracy(&gold, &gold).unwrap(), 1.0);
    }
}

#[test]
fn normal_approximation_tracks_enumeration_at_twenty() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..5 {
        let diffs: Vec<f64> = (1..=20).map(|i| if rng.gen_bool(0.35) { -(i as f64) } else { i as f64 }).collect();
        let ranked = signed_ranks(&diffs);
        let ranks: Vec<f64> = ranked.iter().map(|r| r.0).collect();
        let w: f64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
        let (_, exact) = common::enumeration_p(&diffs);
        let approx = normal_p_value(&ranks, w);
        assert!((approx - exact).abs() < 0.01, "exact {exact}, approx {approx}");
    }
}

fn tiny_config() -> PipelineConfig {
    PipelineConfig {
        encoder: EncoderConfig { input_dim: 8, hidden_dims: vec![16], feature_dim: 8, ..Default::default() },
        pretrain: TrainConfig { epochs: 2, batch_size: 16, max_learning_rate: 5e-3, ..Default::default() },
        fine_tune: TrainConfig { epochs: 3, batch_size: 16, max_learning_rate: 5e-3, ..Default::default() },
        gbdt: GbdtParams { min_samples_leaf: 5, max_leaves: 8, ..Default::default() },
        round_candidates: vec![1, 5, 10],
        heads: HeadKind::ALL.to_vec(),
    }
}

#[test]
fn smallest_sweep_reports_every_head() {
    let parent = common::blob_task("parent", 10, [200, 0, 0], 8, 4);
    let task = common::blob_task("blobs", 11, [120, 40, 40], 8, 3);
    let report = compare_heads(Some(&parent), &[task], &[1, 2], &tiny_config(), SweepOptions::default()).unwrap();
    assert!(report.is_complete());
    assert_eq!(report.cells.len(), 3);
    for cell in &report.cells {
        assert_eq!(cell.n_seeds, 2);
        assert!((0.0..=1.0).contains(&cell.dev_mean));
    }
    assert_eq!(report.diffs.len(), 2);
    for r in &report.results {
        assert_eq!(r.heads.len(), 3);
        assert_eq!(r.head(HeadKind::StandardGbdt).unwrap().train_rows, 120);
        assert_eq!(r.head(HeadKind::FreeGbdt).unwrap().train_rows, 360);
    }
}

#[test]
fn sweeps_are_deterministic_and_recomputable() {
    let tasks = [common::blob_task("a", 12, [80, 30, 0], 8, 2), common::blob_task("b", 13, [100, 30, 0], 8, 3)];
    let config = tiny_config();
    let one = compare_heads(None, &tasks, &[5, 6, 7], &config, SweepOptions::default()).unwrap();
    let two =
        compare_heads(None, &tasks, &[5, 6, 7], &config, SweepOptions { workers: 2, ..Default::default() }).unwrap();
    assert_eq!(results_csv(&one.results, false), results_csv(&two.results, false));
    assert_eq!(report_csv(&one), report_csv(&two));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    std::fs::write(&path, results_csv(&one.results, false)).unwrap();
    let reread = read_results_csv(&path).unwrap();
    let again = ComparisonReport::aggregate(
        one.tasks.clone(),
        one.seeds.clone(),
        one.heads.clone(),
        reread,
        Vec::new(),
        WilcoxonPopulation::AllPairs,
    );
    assert_eq!(again.cells, one.cells);
    assert_eq!(again.diffs, one.diffs);
    for cell in &one.cells {
        let vals: Vec<f64> = one
            .results
            .iter()
            .filter(|r| r.task_id == cell.task_id)
            .map(|r| r.head(cell.head).unwrap().dev_accuracy)
            .collect();
        assert_eq!(cell.dev_mean, vals.iter().sum::<f64>() / vals.len() as f64);
    }
}

#[test]
fn head_filter_skips_standard_gbdt() {
    let task = common::blob_task("filtered", 14, [80, 30, 0], 8, 2);
    let config = PipelineConfig { heads: vec![HeadKind::Mlp, HeadKind::FreeGbdt], ..tiny_config() };
    let report = compare_heads(None, &[task], &[1, 2], &config, SweepOptions::default()).unwrap();
    assert!(report.cells.iter().all(|c| c.head != HeadKind::StandardGbdt));
    assert!(report.results.iter().all(|r| r.head(HeadKind::StandardGbdt).is_none()));
    assert_eq!(report.cells.len(), 2);
}

#[test]
fn both_wilcoxon_populations_are_reported() {
    let tasks = [common::blob_task("a", 15, [80, 30, 0], 8, 2), common::blob_task("b", 16, [80, 30, 0], 8, 2)];
    let options = SweepOptions { workers: 1, wilcoxon: WilcoxonPopulation::PerTaskMeans };
    let report = compare_heads(None, &tasks, &[1, 2, 3], &tiny_config(), options).unwrap();
    let pops: Vec<(WilcoxonPopulation, bool)> = report.wilcoxon.iter().map(|b| (b.population, b.primary)).collect();
    assert_eq!(pops, vec![(WilcoxonPopulation::AllPairs, false), (WilcoxonPopulation::PerTaskMeans, true)]);
    let csv = report_csv(&report);
    assert!(csv.contains("all-pairs,false"));
    assert!(csv.contains("per-task-means,true"));
}

#[test]
fn win_loss_lookup_is_symmetric() {
    let task = common::blob_task("wl", 20, [80, 30, 0], 8, 3);
    let report = compare_heads(None, &[task], &[1, 2, 3], &tiny_config(), SweepOptions::default()).unwrap();
    let ab = report.win_loss("wl", HeadKind::StandardGbdt, HeadKind::FreeGbdt).unwrap();
    let ba = report.win_loss("wl", HeadKind::FreeGbdt, HeadKind::StandardGbdt).unwrap();
    assert_eq!((ab.wins, ab.losses, ab.ties), (ba.losses, ba.wins, ba.ties));
    assert_eq!(ab.wins + ab.losses + ab.ties, 3);
    assert!(report.win_loss("wl", HeadKind::Mlp, HeadKind::Mlp).is_none());
}

#[test]
fn sweep_needs_two_seeds() {
    let task = common::blob_task("x", 17, [40, 10, 0], 8, 2);
    assert!(compare_heads(None, &[task], &[1], &tiny_config(), SweepOptions::default()).is_err());
}

#[test]
fn epoch_curve_counts_samples() {
    let task = common::blob_task("curve", 18, [90, 30, 0], 8, 3);
    let config =
        PipelineConfig { fine_tune: TrainConfig { epochs: 4, batch_size: 16, ..Default::default() }, ..tiny_config() };
    let state = prepare_encoder(
        None,
        &PipelineConfig { encoder: EncoderConfig { num_classes: 3, ..config.encoder.clone() }, ..config.clone() },
        1,
    )
    .unwrap();
    let curve = epoch_curve(&state, &task, &config, 1).unwrap();
    assert_eq!(curve.len(), 4);
    for (e, p) in curve.iter().enumerate() {
        assert_eq!(p.epoch, e + 1);
        assert_eq!(p.standard_gbdt_rows, 90);
        assert_eq!(p.free_gbdt_rows, 90 * (e + 1));
        for acc in [p.mlp_accuracy, p.standard_gbdt_accuracy, p.free_gbdt_accuracy] {
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}

#[test]
fn trace_covers_both_stores() {
    let task = common::blob_task("trace", 19, [50, 10, 0], 8, 2);
    let train = task.train();
    let mut state = ModelState::new(EncoderConfig {
        input_dim: 8,
        hidden_dims: vec![6],
        feature_dim: 4,
        num_classes: 2,
        ..Default::default()
    })
    .unwrap();
    let (store, _) =
        fine_tune_accumulate(&mut state, &train, &TrainConfig { epochs: 3, batch_size: 8, ..Default::default() })
            .unwrap();
    let post = extract_features_post(&state, &train, &mut ForwardCounter::default()).unwrap();
    let rows = feature_trace(&store, &post, 2).unwrap();
    assert_eq!(rows.len(), store.len() + post.len());
    assert!(feature_trace(&store, &post, 4).is_err());
    let drift = drift_summary(&store, &post, 2).unwrap();
    assert_eq!(drift.epoch_means.len(), 3);
}

#[test]
fn zero_weight_encoder_traces_constant_values() {
    let task = common::blob_task("flat", 20, [30, 10, 0], 8, 2);
    let train = task.train();
    let mut state = ModelState::new(EncoderConfig {
        input_dim: 8,
        hidden_dims: vec![6],
        feature_dim: 4,
        num_classes: 2,
        dropout_rate: 0.0,
        ..Default::default()
    })
    .unwrap();
    state.params.iter_mut().for_each(|p| *p = 0.0);
    let mut counter = ForwardCounter::default();
    let post = extract_features_post(&state, &train, &mut counter).unwrap();
    let mut frozen = freegbdt::FeatureStore::new(4, 2, freegbdt::StoreSource::DuringTraining);
    for rec in &post.records {
        frozen.push(freegbdt::FeatureRecord { epoch: 1, ..rec.clone() }).unwrap();
    }
    let rows = feature_trace(&frozen, &post, 0).unwrap();
    assert!(rows.iter().all(|r| r.value == rows[0].value));
}
