use std::path::Path;
use std::process::{Command, Output};

use ddmm_cli::manifest::{Manifest, MANIFEST_FILE};
use ddmm_core::ingest::{write_csv, PreprocessMetadata, TimeSeries};
use ddmm_core::nn::{ModelFile, ModelKind};

fn ddmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddmm")).args(args).output().unwrap()
}

fn expect_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Two alternating two-sensor states with a constant third column that the
/// config drops.
fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let rows: Vec<Vec<f64>> = (0..240)
        .map(|t| {
            let s = ((t / 30) % 2) as f64;
            vec![
                10.0 + (t as f64 * 0.3).sin() + 4.0 * s,
                -2.0 + 0.5 * (t as f64 * 0.11).cos(),
                7.0,
            ]
        })
        .collect();
    let labels = (0..240).map(|t| ((t / 30) % 2) as i64).collect();
    let ts = TimeSeries::from_rows(&rows, Some(labels)).unwrap();
    let mut bytes = Vec::new();
    write_csv(&ts, &mut bytes).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let header = text.lines().next().unwrap().to_string();
    assert!(header.contains("label"), "{header}");
    let csv = dir.join("raw.csv");
    std::fs::write(&csv, text).unwrap();

    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"seeds = [0]
methods = ["eu", "ddmm"]

[dataset]
path = "{}"
profile = "generic"
label_column = "label"
steps = [{{ op = "drop_sensor", name = "{}" }}, {{ op = "normalize_min_max" }}]

[segments]
window = 5

[train]
epochs = 2
batch_size = 32

[queries]
mode = "all-with-label"
label = 1
"#,
            csv.display(),
            header.split(',').nth(2).unwrap()
        ),
    )
    .unwrap();
    config
}

#[test]
fn preprocess_writes_data_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let out = dir.path().join("pre");
    expect_ok(&ddmm(&["preprocess", "-c", config.to_str().unwrap(), "-o", out.to_str().unwrap()]));
    let meta = PreprocessMetadata::from_toml(&std::fs::read_to_string(out.join("preprocessed.meta.toml")).unwrap())
        .unwrap();
    assert_eq!(meta.rows, 240);
    assert_eq!(meta.sensors, 2);
    assert!(meta.normalization.is_some());
    let manifest = Manifest::load(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.inputs.len(), 1);
    assert!(manifest.artifacts.contains_key("preprocessed.csv"));
}

#[test]
fn train_then_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let cfg = config.to_str().unwrap();
    let model_dir = dir.path().join("model");
    expect_ok(&ddmm(&["train", "-c", cfg, "-o", model_dir.to_str().unwrap(), "--seed", "3"]));
    let model = model_dir.join("model.ddmm");
    let file = ModelFile::load(&model).unwrap();
    assert_eq!(file.metadata.kind, ModelKind::Ddmm);
    assert_eq!((file.metadata.window, file.metadata.sensors, file.metadata.seed), (5, 2, 3));
    assert_eq!(file.metadata.epochs, Some(2));
    let loss = std::fs::read_to_string(model_dir.join("train_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let ranked = dir.path().join("ranked");
    let args = ["retrieve", "-c", cfg, "-o", ranked.to_str().unwrap(), "--model", model.to_str().unwrap()];
    let mut with_queries = args.to_vec();
    with_queries.extend(["--query", "40,100", "--k", "3"]);
    expect_ok(&ddmm(&with_queries));
    let rows = std::fs::read_to_string(ranked.join("rankings.csv")).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines[0], "query,rank,time,distance");
    assert_eq!(lines.len(), 7);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let (q, t): (usize, usize) = (f[0].parse().unwrap(), f[2].parse().unwrap());
        assert!(q.abs_diff(t) >= 5);
    }

    // A different window no longer matches the model.
    let mut wrong = with_queries.clone();
    wrong.extend(["--set", "segments.window=6"]);
    let o = ddmm(&wrong);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("K=5"));
}

#[test]
fn euclidean_train_writes_a_marker_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let out = dir.path().join("eu");
    expect_ok(&ddmm(&[
        "train",
        "-c",
        config.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--set",
        "method=\"eu\"",
    ]));
    let file = ModelFile::load(&out.join("model.ddmm")).unwrap();
    assert_eq!(file.metadata.kind, ModelKind::Euclidean);
    assert!(file.networks.is_empty());
}

#[test]
fn sweep_over_window() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let out = dir.path().join("sweep");
    expect_ok(&ddmm(&[
        "sweep",
        "-c",
        config.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--axis",
        "K",
        "--values",
        "3,6",
    ]));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("K,method,k,map_mean,map_std"));
    // 2 values x 2 methods x 2 cutoffs.
    assert_eq!(lines.count(), 8);
    assert!(out.join("K=3/summary.csv").exists());
    assert!(out.join("K=6/histograms/ddmm_relevant.csv").exists());
}

#[test]
fn rerun_detects_changed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let out = dir.path().join("bench");
    expect_ok(&ddmm(&["benchmark", "-c", config.to_str().unwrap(), "-o", out.to_str().unwrap()]));
    for name in ["summary.csv", "per_query.csv", "curves.csv", "report.json", "table.txt", "queries/seed0.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let path = out.join(MANIFEST_FILE);
    let mut manifest = Manifest::load(&path).unwrap();
    manifest.artifacts.insert("summary.csv".into(), "0".repeat(64));
    manifest.save(&out).unwrap();
    let again = dir.path().join("again");
    let o = ddmm(&["benchmark", "--manifest", path.to_str().unwrap(), "-o", again.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("summary.csv"));
}

#[test]
fn bad_input_fails_cleanly() {
    let o = ddmm(&["benchmark", "--data", "/definitely/missing.csv"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = ddmm(&["benchmark", "--set", "train.batch_size=0"]);
    assert!(!o.status.success());
}
