use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mislabel_core::dataio::manifest::{DatasetManifest, MANIFEST_VERSION};
use mislabel_core::dataio::{write_split, Labels, TaskKind};
use mislabel_core::{EmbeddingTensor, LabelSet, Matrix};
use serde_json::Value;

fn mislabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mislabel")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = mislabel(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one summary line expected: {stdout}");
    serde_json::from_str(&stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn gen_small(dir: &Path, extra: &[&str]) -> String {
    let out = p(dir, "data");
    let mut args = vec!["-q", "gen", "--out", &out, "--n", "300", "--classes", "3", "--dim", "4", "--separation", "4"];
    args.extend_from_slice(extra);
    ok(&args);
    p(dir, "data/manifest.toml")
}

#[test]
fn repeated_noise_injection_gives_identical_masks() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_small(dir.path(), &[]);
    for name in ["a", "b"] {
        let out = p(dir.path(), name);
        let s = ok(&["-q", "inject-noise", "--manifest", &manifest, "--out", &out, "--kind", "symmetric", "--rate", "0.3", "--seed", "7"]);
        assert!(s["summary"]["changed"].as_u64().unwrap() > 0);
    }
    let a = fs::read(dir.path().join("a/train.mask")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/train.mask")).unwrap());
}

#[test]
fn tta_on_single_view_logs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_small(dir.path(), &[]);
    let out = p(dir.path(), "det");
    let res = mislabel(&["detect", "--manifest", &manifest, "--out", &out, "--method", "cl", "--tta"]);
    assert_eq!(res.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("only one view"), "{stderr}");
    assert!(dir.path().join("det/report.csv").exists());
}

#[test]
fn noise_sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_small(dir.path(), &[]);
    let out = p(dir.path(), "sweep");
    let s = ok(&[
        "-q", "sweep-noise", "--manifest", &manifest, "--out", &out, "--levels", "0.1:0.6:0.1",
        "--methods", "cl,knn,tracin,zeroshot", "--seeds", "0,1", "--plot-data", "--epochs", "4",
    ]);
    assert_eq!(s["summary"]["cells"], 48);
    let csv = fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 4 * 2);
    assert!(dir.path().join("sweep/f1_vs_noise.csv").exists());
}

#[test]
fn single_label_pipeline_is_reproducible_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_small(dir.path(), &["--test", "200"]);
    let noisy_dir = p(dir.path(), "noisy");
    ok(&["-q", "inject-noise", "--manifest", &manifest, "--out", &noisy_dir, "--kind", "confidence", "--rate", "0.2", "--seed", "3"]);
    let noisy = p(dir.path(), "noisy/manifest.toml");
    let snapshot = |d: &str| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir.path().join(d))
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
            .collect();
        files.sort();
        files
    };
    let before = (snapshot("data"), snapshot("noisy"));

    let mut reports = vec![];
    for run in ["r1", "r2"] {
        let out = p(dir.path(), run);
        let s = ok(&["-q", "clean", "--manifest", &noisy, "--out", &out, "--method", "knn"]);
        assert!(s["summary"]["removed"].as_u64().unwrap() > 0);
        reports.push(fs::read(dir.path().join(run).join("report.csv")).unwrap());
        assert!(dir.path().join(run).join("run_config.json").exists());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(before, (snapshot("data"), snapshot("noisy")));

    let cleaned = p(dir.path(), "r1/manifest.toml");
    let text = fs::read_to_string(&cleaned).unwrap();
    assert!(text.contains("source_manifest"));

    let det = p(dir.path(), "det");
    ok(&["-q", "detect", "--manifest", &noisy, "--out", &det, "--method", "tracin"]);
    let ev = p(dir.path(), "eval");
    let report = p(dir.path(), "det/report.csv");
    let s = ok(&["-q", "eval", "--manifest", &noisy, "--out", &ev, "--report", &report, "--thresholds", "0:300:25"]);
    assert!(s["summary"]["f1"].as_f64().unwrap() > 0.0);
    assert!(s["summary"]["threshold_best"]["f1"].is_number());

    let rt = p(dir.path(), "retrain");
    let s = ok(&["-q", "retrain", "--manifest", &noisy, "--out", &rt, "--report", &report]);
    assert_eq!(s["summary"]["eval_split"], "test");
    assert!(s["summary"]["accuracy_after"].is_number());
}

#[test]
fn multilabel_gridsearch_then_retrain() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data");
    ok(&[
        "-q", "gen", "--out", &data, "--multilabel", "--classes", "3", "--n", "400", "--validation", "200",
        "--test", "200", "--dim", "4", "--separation", "3",
    ]);
    let manifest = p(dir.path(), "data/manifest.toml");
    let gs = p(dir.path(), "gs");
    let s = ok(&["-q", "gridsearch", "--manifest", &manifest, "--out", &gs, "--alphas", "0.5,1"]);
    assert_eq!(s["summary"]["choices"].as_array().unwrap().len(), 3);
    let grid = fs::read_to_string(dir.path().join("gs/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 3 * 5);

    let rt = p(dir.path(), "rt");
    let gs_manifest = p(dir.path(), "gs/manifest.toml");
    let s = ok(&["-q", "retrain", "--manifest", &gs_manifest, "--out", &rt]);
    assert!(s["summary"]["macro_auc_after"].is_number());

    let sf = p(dir.path(), "sf");
    let s = ok(&["-q", "sweep-fractions", "--manifest", &manifest, "--out", &sf, "--fractions", "0.5,1", "--seeds", "0", "--strategies", "per-label,per-image"]);
    assert_eq!(s["summary"]["cells"], 4);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "x");
    let missing = p(dir.path(), "missing.toml");
    assert_eq!(mislabel(&["detect", "--manifest", &missing, "--out", &out]).status.code(), Some(1));
    assert_eq!(mislabel(&["detect", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mislabel(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mislabel(&["--help"]).status.code(), Some(0));

    let manifest = gen_small(dir.path(), &[]);
    let bad_rate = mislabel(&["inject-noise", "--manifest", &manifest, "--out", &out, "--kind", "symmetric", "--rate", "1.5"]);
    assert_eq!(bad_rate.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_rate.stderr).contains("outside"));
    let even = mislabel(&["detect", "--manifest", &manifest, "--out", &out, "--method", "knn", "--rounds", "4"]);
    assert_eq!(even.status.code(), Some(1));
}

#[test]
fn degenerate_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let x = EmbeddingTensor::single(Matrix::zeros(12, 3)).unwrap();
    let y = Labels::Single(LabelSet::new((0..12).map(|i| i % 2).collect(), 2).unwrap());
    let train = write_split(dir.path(), "train", &x, &y, None).unwrap();
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        task: TaskKind::SingleLabel,
        class_names: vec!["a".into(), "b".into()],
        dim: 3,
        encoder: None,
        augmentation: None,
        class_embeddings: None,
        removal_plan: None,
        source_manifest: None,
        train,
        validation: None,
        test: None,
        noise: None,
    };
    let path = dir.path().join("manifest.toml");
    manifest.write(&path).unwrap();
    let out = p(dir.path(), "out");
    let res = mislabel(&["-q", "detect", "--manifest", path.to_str().unwrap(), "--out", &out, "--method", "knn"]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}
