use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "suite_spec": {
    "input_dim": 8,
    "parent_size": 300,
    "children": [
      {"name": "small", "train_size": 60, "dev_size": 30, "test_size": 20, "num_classes": 3, "rotation_seed": 1, "label_noise": 0.1},
      {"name": "pair", "train_size": 80, "dev_size": 30, "test_size": 0, "num_classes": 2, "rotation_seed": 2, "label_noise": 0.1}
    ]
  },
  "pipeline": {
    "encoder": {"input_dim": 8, "hidden_dims": [12], "feature_dim": 6},
    "pretrain": {"epochs": 1, "batch_size": 32},
    "fine_tune": {"epochs": 3, "batch_size": 16, "max_learning_rate": 0.005},
    "gbdt": {"min_samples_leaf": 5, "max_leaves": 8},
    "round_candidates": [1, 5, 10]
  }
}"#;

fn freegbdt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freegbdt"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("FREEGBDT_OUT")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn run_with_one_seed_writes_three_head_rows_and_artifacts() {
    let tmp = setup();
    let o = freegbdt(&["run", "--config", "tiny.json", "--tasks", "small", "--out", "r1"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("r1");
    let results = read(&out, "results.csv");
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{results}");
    for head in ["mlp", "standard_gbdt", "free_gbdt"] {
        assert!(rows.iter().any(|r| r.starts_with(&format!("small,0,{head},"))), "{results}");
    }
    let run = out.join("runs/small/seed-0");
    for f in ["checkpoint.fgnn", "during.fgfs", "post.fgfs", "standard_gbdt.fgbm", "free_gbdt.fgbm"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("config.json").is_file());
}

#[test]
fn reruns_are_byte_identical_including_from_the_written_config() {
    let tmp = setup();
    let a = freegbdt(&["run", "--config", "tiny.json", "--seeds", "3,4", "--out", "a"], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = freegbdt(&["run", "--config", "tiny.json", "--seeds", "3,4", "--out", "b"], tmp.path());
    assert!(b.status.success(), "{}", stderr(&b));
    let c = freegbdt(&["run", "--config", "a/config.json", "--out", "c"], tmp.path());
    assert!(c.status.success(), "{}", stderr(&c));
    let p = tmp.path();
    let first = read(&p.join("a"), "results.csv");
    assert_eq!(first, read(&p.join("b"), "results.csv"));
    assert_eq!(first, read(&p.join("c"), "results.csv"));
    let ckpt = "runs/pair/seed-4/checkpoint.fgnn";
    assert_eq!(fs::read(p.join("a").join(ckpt)).unwrap(), fs::read(p.join("c").join(ckpt)).unwrap());
}

#[test]
fn missing_dataset_exits_one_without_creating_output() {
    let tmp = setup();
    let o = freegbdt(&["run", "--dataset", "nope.csv", "--out", "never"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset not found"), "{}", stderr(&o));
    assert!(!tmp.path().join("never").exists());
}

#[test]
fn bad_flags_and_configs_exit_one() {
    let tmp = setup();
    assert_eq!(freegbdt(&["compare", "--seeds", "x"], tmp.path()).status.code(), Some(1));
    assert_eq!(freegbdt(&["frobnicate"], tmp.path()).status.code(), Some(1));
    fs::write(tmp.path().join("typo.json"), r#"{"sedes": [1, 2]}"#).unwrap();
    assert_eq!(freegbdt(&["run", "--config", "typo.json"], tmp.path()).status.code(), Some(1));
    let one_seed = freegbdt(&["compare", "--config", "tiny.json", "--seeds", "5", "--out", "x"], tmp.path());
    assert_eq!(one_seed.status.code(), Some(1));
    assert!(freegbdt(&["--help"], tmp.path()).status.success());
}

#[test]
fn occupied_output_needs_overwrite() {
    let tmp = setup();
    let args = ["run", "--config", "tiny.json", "--tasks", "pair", "--out", "o"];
    assert!(freegbdt(&args, tmp.path()).status.success());
    let again = freegbdt(&args, tmp.path());
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--overwrite"));
    let mut forced = args.to_vec();
    forced.push("--overwrite");
    assert!(freegbdt(&forced, tmp.path()).status.success());
}

#[test]
fn compare_reports_every_cell_and_honours_filters() {
    let tmp = setup();
    let o = freegbdt(
        &[
            "compare",
            "--config",
            "tiny.json",
            "--seeds",
            "0..3",
            "--workers",
            "2",
            "--wilcoxon",
            "per-task-means",
            "--out",
            "cmp",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("cmp");
    let report = read(&out, "report.csv");
    let table_rows = report.split("\n\n").next().unwrap().lines().count() - 1;
    assert_eq!(table_rows, 2 * 3);
    assert!(report.contains("all-pairs,false"), "{report}");
    assert!(report.contains("per-task-means,true"), "{report}");
    for f in ["results.csv", "table.csv", "diffs.csv", "winloss.csv", "config.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let f = freegbdt(
        &["compare", "--config", "tiny.json", "--seeds", "0..2", "--heads", "mlp,free_gbdt", "--out", "filtered"],
        tmp.path(),
    );
    assert!(f.status.success(), "{}", stderr(&f));
    let results = read(&tmp.path().join("filtered"), "results.csv");
    assert!(!results.contains("standard_gbdt"));
    assert_eq!(results.lines().count() - 1, 2 * 2 * 2);
}

#[test]
fn epochs_curve_has_one_row_per_epoch() {
    let tmp = setup();
    let o = freegbdt(
        &["epochs-curve", "--config", "tiny.json", "--tasks", "small", "--epochs", "4", "--out", "curve"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = read(&tmp.path().join("curve"), "curve_small_seed0.csv");
    assert_eq!(curve.lines().count(), 1 + 4, "{curve}");
}

#[test]
fn trace_writes_values_and_drift() {
    let tmp = setup();
    let o =
        freegbdt(&["trace", "--config", "tiny.json", "--tasks", "pair", "--dimension", "2", "--out", "tr"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("tr");
    let trace = read(&out, "trace_pair_seed0.csv");
    // 80 rows per epoch for 3 epochs, plus the post-training pass.
    assert_eq!(trace.lines().count(), 1 + 80 * 3 + 80);
    assert_eq!(read(&out, "drift.csv").lines().count(), 1 + 3);
    let bad = freegbdt(&["trace", "--config", "tiny.json", "--dimension", "6", "--out", "bad"], tmp.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn gen_suite_defaults_and_reload() {
    let tmp = setup();
    let o = freegbdt(&["gen-suite", "--out", "suite"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for line in ["cb: train 250", "rte: train 2500", "cnli: train 6600"] {
        assert!(stdout.contains(line), "{stdout}");
    }
    let suite = tmp.path().join("suite");
    assert!(suite.join("suite.manifest").is_file());
    assert!(suite.join("parent.csv").is_file());

    let small = freegbdt(&["gen-suite", "--config", "tiny.json", "--out", "tiny_suite"], tmp.path());
    assert!(small.status.success());
    let from_dir = freegbdt(
        &["run", "--config", "tiny.json", "--suite", "tiny_suite", "--tasks", "small", "--out", "from_dir"],
        tmp.path(),
    );
    assert!(from_dir.status.success(), "{}", stderr(&from_dir));
    let in_memory = freegbdt(&["run", "--config", "tiny.json", "--tasks", "small", "--out", "in_memory"], tmp.path());
    assert!(in_memory.status.success());
    assert_eq!(read(&tmp.path().join("from_dir"), "results.csv"), read(&tmp.path().join("in_memory"), "results.csv"));
}

#[test]
fn wilcoxon_on_all_zero_differences_fails() {
    let tmp = setup();
    let results = "task_id,seed,head,dev_accuracy,test_accuracy,boosting_rounds,wall_seconds\n\
                   t,0,mlp,0.5,NA,NA,NA\nt,0,free_gbdt,0.5,NA,10,NA\n\
                   t,1,mlp,0.7,NA,NA,NA\nt,1,free_gbdt,0.7,NA,10,NA\n";
    fs::write(tmp.path().join("zero.csv"), results).unwrap();
    let o = freegbdt(&["wilcoxon", "--results", "zero.csv", "--out", "w"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no nonzero differences"), "{}", stderr(&o));

    let tmp2 = setup();
    let ok = freegbdt(&["compare", "--config", "tiny.json", "--seeds", "0..3", "--out", "c"], tmp2.path());
    assert!(ok.status.success(), "{}", stderr(&ok));
    let w = freegbdt(&["wilcoxon", "--results", "c/results.csv", "--out", "w"], tmp2.path());
    assert!(w.status.success(), "{}", stderr(&w));
    let report = read(&tmp2.path().join("w"), "report.csv");
    let compared = read(&tmp2.path().join("c"), "report.csv");
    let block = |r: &str| r.split("\n\n").nth(1).unwrap().to_string();
    assert_eq!(block(&report), block(&compared));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_freegbdt"))
        .args(["run", "--config", "tiny.json", "--tasks", "pair"])
        .current_dir(tmp.path())
        .env("RUST_LOG", "warn")
        .env("FREEGBDT_OUT", tmp.path().join("root"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("root/run/results.csv").is_file());
}
