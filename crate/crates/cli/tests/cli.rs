use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(args)
        .env("FINSLER_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn radial_poincare_geodesic() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("poincare");
    let o = run(&["geodesic", "--metric", m.to_str().unwrap(), "--x0", "0,0", "--v0", "1,0", "--T", "1", "--unit-speed"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("geodesic.json"));
    let end = report["result"]["end_point"].as_array().unwrap();
    assert!((end[0].as_f64().unwrap() - 0.5f64.tanh()).abs() < 1e-8);
    assert!(end[1].as_f64().unwrap().abs() < 1e-8);
    assert_eq!(report["command"], "geodesic");
    assert!(report["version"].is_string());
    assert_eq!(report["config"]["unit_speed"], true);
    let csv = fs::read_to_string(dir.path().join("geodesic.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,v1,v2,F\n"));
    // 17 significant digits
    let field = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap();
    assert_eq!(field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{field}");
}

#[test]
fn randers_distance_is_asymmetric() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("randers_const");
    let m = m.to_str().unwrap();
    let fwd = run(&["distance", "--metric", m, "--p", "0,0", "--q", "1,0"], dir.path());
    assert_eq!(fwd.status.code(), Some(0), "{}", stderr(&fwd));
    let d = json(&dir.path().join("distance.json"))["result"]["distance"].as_f64().unwrap();
    assert!((d - 1.5).abs() < 1e-9);
    let rev = run(&["distance", "--metric", m, "--p", "1,0", "--q", "0,0"], dir.path());
    let d = json(&dir.path().join("distance.json"))["result"]["distance"].as_f64().unwrap();
    assert!((d - 0.5).abs() < 1e-9, "{}", stdout(&rev));
}

#[test]
fn berwald_product_classification() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("berwald_product");
    let o = run(&["classify", "--metric", m.to_str().unwrap(), "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("berwald: yes"));
    let report = json(&dir.path().join("classify.json"));
    assert_eq!(report["result"]["verdicts"]["berwald"], "yes");
    assert_eq!(report["result"]["verdicts"]["flag_nonpositive"], "yes");
    assert_eq!(report["result"]["verdicts"]["busemann_sampled"], "pass");
    assert_eq!(report["config"]["classify"]["seed"], 7);
    assert!(report["result"]["disclaimer"].as_str().unwrap().contains("no convexity violation found"));
}

fn quick_classify(metric: &str, out: &Path, extra: &[&str]) -> Output {
    let m = fixture(metric);
    let mut args = vec![
        "classify", "--metric", m.to_str().unwrap(), "--seed", "3", "--pairs", "50", "--berwald-samples", "20",
        "--curvature-samples", "20", "--loops", "3", "--kappa-samples", "3",
    ];
    args.extend_from_slice(extra);
    run(&args, out)
}

#[test]
fn strict_mode_flags_negative_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let lenient = quick_classify("sphere_chart", dir.path(), &["--csv"]);
    assert_eq!(lenient.status.code(), Some(0), "{}", stderr(&lenient));
    assert!(stdout(&lenient).contains("busemann_sampled: violated"));
    assert!(dir.path().join("busemann.csv").exists());
    let report = json(&dir.path().join("classify.json"));
    assert!(report["result"]["witnesses"]["busemann"]["pair"]["x1"].is_array());
    let strict = quick_classify("sphere_chart", dir.path(), &["--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    let flat = quick_classify("minkowski_quartic", dir.path(), &["--strict"]);
    assert_eq!(flat.status.code(), Some(0), "{}", stderr(&flat));
}

#[test]
fn classify_json_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    quick_classify("randers_sine", a.path(), &[]);
    quick_classify("randers_sine", b.path(), &[]);
    // identical apart from the output directory recorded in the config
    let load = |dir: &Path| {
        let mut v = json(&dir.join("classify.json"));
        v["config"]["out"] = Value::Null;
        v.to_string()
    };
    assert_eq!(load(a.path()), load(b.path()));
}

#[test]
fn invalid_randers_fails_validation_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"family": "randers", "dimension": 2, "params": {"a": "euclidean", "b": [1.2, 0.0]},
                   "chart_domain": {"lower": [-1, -1], "upper": [1, 1]}}"#;
    let path = dir.path().join("bad.json");
    fs::write(&path, spec).unwrap();
    let o = run(&["validate", "--metric", path.to_str().unwrap(), "--samples", "5"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("witness"));
    let report = json(&dir.path().join("validate.json"));
    assert_eq!(report["result"]["passed"], false);
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["distance", "--metric", "no/such.json", "--p", "0,0", "--q", "1,0"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"family\": \"riemannian\",\n  \"dimension\" 2\n}").unwrap();
    let o = run(&["validate", "--metric", broken.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3 column"), "{}", stderr(&o));

    let zero = dir.path().join("zero.json");
    fs::write(&zero, r#"{"family": "riemannian", "dimension": 0, "chart_domain": {"lower": [], "upper": []}}"#).unwrap();
    let o = run(&["validate", "--metric", zero.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"), "{}", stderr(&o));

    let m = fixture("poincare");
    let o = run(&["geodesic", "--metric", m.to_str().unwrap(), "--x0", "0,0,0", "--v0", "1,0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["geodesic", "--metric", m.to_str().unwrap(), "--x0", "0,0", "--v0", "1,0", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("poincare");
    let o = run(
        &["geodesic", "--metric", m.to_str().unwrap(), "--x0", "0,0", "--v0", "1,0", "--rtol", "1e-40", "--atol", "1e-40"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "").unwrap();
    let m = fixture("poincare");
    let o = run(&["geodesic", "--metric", m.to_str().unwrap(), "--x0", "0,0", "--v0", "0.5,0"], &file);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn transport_and_curvature_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("berwald_product");
    let o = run(
        &["transport", "--metric", m.to_str().unwrap(), "--x0", "0.1,0,0.2", "--v0", "0.3,-0.2,0.4", "--w", "1,0,0", "--w", "0,-1,1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("transport.json"));
    assert!(report["result"]["max_norm_deviation"].as_f64().unwrap() < 1e-6);
    let header = fs::read_to_string(dir.path().join("transport.csv")).unwrap();
    assert!(header.starts_with("t,W1_1,W1_2,W1_3,W2_1,W2_2,W2_3,F_W1,F_W2\n"), "{}", &header[..80]);

    let s = fixture("sphere_chart");
    let o = run(&["curvature", "--metric", s.to_str().unwrap(), "--x", "0.1,0.2", "--v", "1,0", "--w", "0,1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let k = json(&dir.path().join("curvature.json"))["result"]["flag"]["curvature"].as_f64().unwrap();
    assert!((k - 1.0).abs() < 1e-9);
    let o = run(&["curvature", "--metric", s.to_str().unwrap(), "--samples", "10"], dir.path());
    assert!(stdout(&o).contains("flag_nonpositive: no"));
    assert!(dir.path().join("curvature.csv").exists());
}
