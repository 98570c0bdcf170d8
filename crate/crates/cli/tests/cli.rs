use std::path::Path;
use std::process::{Command, Output};

use mantensor::io;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mantensor"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mantensor")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spd_data(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("d.mvt");
    ok(&["generate", "spd1d", "--n", "30", "--seed", "3", "--out", s(&data)]);
    data
}

#[test]
fn sweep_is_deterministic_and_rereadable() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&["sweep", s(&data), "--method", "cc", "--ranks", "1..5", "--out", s(out)]);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let rows = io::read_report_file(&a).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.rank[0]).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    for w in rows.windows(2) {
        assert!(w[1].eps_rel <= w[0].eps_rel + 1e-12);
    }
    let mut again = Vec::new();
    io::write_report_csv(&mut again, &rows).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn full_rank_reconstructs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.mvt");
    ok(&["generate", "sphere1d", "--n", "20", "--noise-var", "0.1", "--out", s(&data)]);
    let core = dir.path().join("core.json");
    let text = ok(&["approximate", s(&data), "--method", "cc", "--rank", "full", "--out-core", s(&core)]);
    let rows = io::read_report_csv(text.as_bytes()).unwrap();
    assert!(rows[0].eps_rel <= 1e-12, "{}", rows[0].eps_rel);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&core).unwrap()).unwrap();
    assert_eq!(doc["method"], "cc");
    assert_eq!(doc["data_shape"], serde_json::json!([20]));
    assert_eq!(doc["base"].as_array().unwrap().len(), 7);
}

#[test]
fn mc_with_fixed_step_reports_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    let text = ok(&[
        "approximate", s(&data), "--method", "mc", "--rank", "1", "--tau", "0.25", "--max-iter", "50",
    ]);
    let rows = io::read_report_csv(text.as_bytes()).unwrap();
    assert!(rows[0].iters.is_some());
    assert!(rows[0].eps_rel.is_finite());
}

#[test]
fn base_point_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    let base = dir.path().join("base.mvt");
    let printed = ok(&["barycentre", s(&data), "--out", s(&base)]);
    let coords: Vec<f64> = serde_json::from_str(printed.trim()).unwrap();
    assert_eq!(coords.len(), 9);
    let from_file = ok(&["sweep", s(&data), "--method", "thosvd", "--ranks", "2", "--base", s(&base)]);
    let default = ok(&["sweep", s(&data), "--method", "thosvd", "--ranks", "2"]);
    assert_eq!(from_file, default);
    ok(&["sweep", s(&data), "--method", "thosvd", "--ranks", "2", "--base", "nearest"]);
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    assert_eq!(run(&["sweep", s(&data), "--method", "svd", "--ranks", "1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", s(&data), "--method", "cc", "--ranks", "0"]).status.code(), Some(2));
    let junk = dir.path().join("junk.mvt");
    std::fs::write(&junk, b"not a tensor at all").unwrap();
    let out = run(&["sweep", s(&junk), "--method", "cc", "--ranks", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
    let sphere = dir.path().join("s.mvt");
    ok(&["generate", "sphere1d", "--n", "5", "--out", s(&sphere)]);
    assert_eq!(
        run(&["sweep", s(&data), "--method", "cc", "--ranks", "1", "--base", s(&sphere)]).status.code(),
        Some(2)
    );
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    let out = run(&["barycentre", s(&data), "--max-iter", "1", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ingest_spd_with_crop() {
    let dir = tempfile::tempdir().unwrap();
    let dims = [3, 2, 2];
    let field: Vec<nalgebra::DMatrix<f64>> =
        (0..12).map(|v| nalgebra::DMatrix::identity(3, 3) * (1.0 + v as f64)).collect();
    let raw = dir.path().join("f.raw");
    std::fs::write(&raw, io::encode_spd_field(&field, dims).unwrap()).unwrap();
    let out = dir.path().join("f.mvt");
    ok(&["ingest-spd", s(&raw), "--dims", "3,2,2", "--crop", "1:3,0:2,1", "--out", s(&out)]);
    let t = io::read_mvt(&out, io::Repair::Reject).unwrap();
    assert_eq!(t.shape(), &[2, 2]);
    assert_eq!(t.get(&[0, 0]).as_matrix().unwrap()[(0, 0)], 1.0 + (1 + (3 * 2)) as f64);
}

#[test]
fn bench_fills_time_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = spd_data(dir.path());
    let text = ok(&["bench", s(&data), "--method", "thosvd", "--ranks", "1,2", "--repeats", "2"]);
    let rows = io::read_report_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.time_s.unwrap() > 0.0));
}
