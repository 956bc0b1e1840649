use std::path::Path;
use std::process::{Command, Output};

use embedtube::experiment::{BOOTSTRAP_JSON, DATASET_CSV, DEVIATIONS_CSV, RATE_JSON, TUBE_CSV, TUBE_JSON, TUBE_WEIGHTS_CSV};
use embedtube::io::{self, BootstrapRecord, DatasetMeta};
use embedtube::{PairedDataset, PointSet};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embedtube"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["simulate", "--m", "250", "--seed", "7"], a.path());
    ok(&["simulate", "--m", "250", "--seed", "7"], b.path());
    assert_eq!(read(a.path().join(DATASET_CSV)), read(b.path().join(DATASET_CSV)));
    let (data, meta) = io::read_dataset(&a.path().join(DATASET_CSV)).unwrap();
    assert_eq!(data.len(), 250);
    assert_eq!(meta.seed, 7);

    let again = tempfile::tempdir().unwrap();
    let copy = again.path().join("copy.csv");
    io::write_dataset(&copy, &data, &meta).unwrap();
    assert_eq!(read(&copy), read(a.path().join(DATASET_CSV)));
}

#[test]
fn simulate_minimal_and_langevin() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--m", "2"], dir.path());
    assert_eq!(io::read_dataset(&dir.path().join(DATASET_CSV)).unwrap().0.len(), 2);

    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "langevin", "potential": {"coeffs": [1, 0, -2, 0, 1]}, "beta_temp": 1}, "m": 100}"#,
    );
    ok(&["simulate", "--config", &cfg], dir.path());
    let (data, meta) = io::read_dataset(&dir.path().join(DATASET_CSV)).unwrap();
    assert_eq!(meta.model, "langevin");
    assert_eq!(data.len(), 100);
    assert!(data.x.as_slice().iter().chain(data.y.as_slice()).all(|v| v.is_finite()));
}

#[test]
fn bootstrap_constant_dataset_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("constant.csv");
    let data = PairedDataset::new(
        PointSet::from_scalars(&[1.5; 20]).unwrap(),
        PointSet::from_scalars(&[1.2; 20]).unwrap(),
        0.1,
        0,
    )
    .unwrap();
    let meta = DatasetMeta { model: "ou".into(), lag: 0.1, seed: 0, dt: 1e-3, m: 20, dim: 1 };
    io::write_dataset(&csv, &data, &meta).unwrap();
    ok(&["bootstrap", "--dataset", csv.to_str().unwrap(), "--bandwidth", "1.0"], dir.path());
    let record: BootstrapRecord = io::read_json(&dir.path().join(BOOTSTRAP_JSON)).unwrap();
    assert_eq!(record.delta, 0.0);
    assert!(io::read_deviations(&dir.path().join(DEVIATIONS_CSV)).unwrap().iter().all(|&d| d == 0.0));
}

#[test]
fn bootstrap_delta_is_the_190th_sorted_deviation() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bootstrap", "--m", "60", "--m-b", "200", "--seed", "4"], dir.path());
    let record: BootstrapRecord = io::read_json(&dir.path().join(BOOTSTRAP_JSON)).unwrap();
    let devs = io::read_deviations(&dir.path().join(&record.deviations_csv_path)).unwrap();
    assert_eq!(devs.len(), 200);
    assert!(devs.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(record.delta, devs[189]);
    assert_eq!((record.m, record.m_b, record.alpha, record.seed), (60, 200, 0.05, 4));
}

#[test]
fn thread_count_does_not_change_results() {
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let out = Command::new(env!("CARGO_BIN_EXE_embedtube"))
                .args(["bootstrap", "--m", "80", "--m-b", "40", "--out"])
                .arg(dir.path())
                .env("TOOL_THREADS", threads)
                .output()
                .unwrap();
            assert!(out.status.success());
            read(dir.path().join(DEVIATIONS_CSV))
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn rate_from_injected_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("injected.csv");
    let rows: Vec<(usize, f64)> = [50, 100, 200, 400, 800].iter().map(|&m| (m, 0.7 * (m as f64).powf(-0.5))).collect();
    io::write_rate_table(&table, &rows).unwrap();
    ok(&["rate", "--table", table.to_str().unwrap()], dir.path());
    let fit: serde_json::Value = io::read_json(&dir.path().join(RATE_JSON)).unwrap();
    assert!((fit["slope"].as_f64().unwrap() + 0.5).abs() < 1e-10);
    assert_eq!(fit["degenerate"], false);

    io::write_rate_table(&table, &[(50, 0.3), (100, 0.3), (200, 0.2)]).unwrap();
    ok(&["rate", "--table", table.to_str().unwrap()], dir.path());
    let fit: serde_json::Value = io::read_json(&dir.path().join(RATE_JSON)).unwrap();
    assert!(fit["slope"].as_f64().unwrap().is_finite());

    io::write_rate_table(&table, &[(50, 0.3), (100, 0.3), (200, 0.3)]).unwrap();
    ok(&["rate", "--table", table.to_str().unwrap()], dir.path());
    let fit: serde_json::Value = io::read_json(&dir.path().join(RATE_JSON)).unwrap();
    assert_eq!(fit["slope"], 0.0);
    assert_eq!(fit["degenerate"], true);
    assert!(fit["warning"].is_string());
}

#[test]
fn tube_without_model_error_scales_initial_radius() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["tube", "--m", "80", "--zero-model-error"], dir.path());
    let report: serde_json::Value = io::read_json(&dir.path().join(TUBE_JSON)).unwrap();
    let e = report["e_norm"].as_f64().unwrap();
    assert_eq!(report["f_norm"], 0.0);
    assert_eq!(report["f_source"], "zero");
    let rows = io::read_tube_csv(&dir.path().join(TUBE_CSV)).unwrap();
    assert_eq!(rows.len(), 21);
    let mut expected = 0.1;
    for row in &rows {
        assert_eq!(row.radius, expected);
        expected *= e;
    }
    let flagged: Vec<&str> = report["unpublished_defaults"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(flagged.contains(&"T") && flagged.contains(&"lag") && flagged.contains(&"bandwidth"));
    assert_eq!(report["physical_time"][20].as_f64().unwrap(), 20.0 * 0.1);
}

#[test]
fn tube_reruns_identically_and_supports_bernstein() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = write_config(a.path(), r#"{"T": 6, "m": 70, "m_b": 50}"#);
    ok(&["tube", "--config", &cfg], a.path());
    ok(&["tube", "--config", &cfg], b.path());
    for name in [TUBE_CSV, TUBE_WEIGHTS_CSV, TUBE_JSON] {
        assert_eq!(read(a.path().join(name)), read(b.path().join(name)), "{name}");
    }
    let weights = io::read_weights_csv(&a.path().join(TUBE_WEIGHTS_CSV)).unwrap();
    assert_eq!(weights.len(), 7 * 70);

    ok(&["tube", "--config", &cfg, "--bound", "bernstein"], b.path());
    let report: serde_json::Value = io::read_json(&b.path().join(TUBE_JSON)).unwrap();
    assert_eq!(report["f_source"], "bernstein");
    assert!(report["f_norm"].as_f64().unwrap() > 0.0);
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--m", "1"], dir.path());
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_argument");
    assert!(err["message"].as_str().unwrap().contains('m'));

    let cfg = write_config(dir.path(), r#"{"lamda": 0.1}"#);
    let out = run(&["tube", "--config", &cfg], dir.path());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "json");

    let out = run(&["bootstrap", "--config", "/nonexistent/cfg.json"], dir.path());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let out = Command::new(env!("CARGO_BIN_EXE_embedtube"))
        .args(["simulate", "--out"])
        .arg(dir.path())
        .env("TOOL_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_argument");
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = run(&["simulate"], &blocker.join("sub"));
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}
