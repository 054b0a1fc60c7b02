use std::fs;
use std::path::Path;

use finsler_core::fixtures::{spec_by_name, FIXTURE_NAMES};
use finsler_core::{Metric, MetricSpec};

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"))
}

#[test]
fn every_fixture_file_round_trips() {
    let mut seen = 0;
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let spec = MetricSpec::from_json_str(&text).unwrap();
        let again = MetricSpec::from_json_str(&spec.to_json_string()).unwrap();
        assert_eq!(spec, again, "{}", path.display());
        Metric::from_spec(spec).unwrap();
        seen += 1;
    }
    assert_eq!(seen, FIXTURE_NAMES.len());
}

#[test]
fn fixture_files_match_the_built_in_specs() {
    for name in FIXTURE_NAMES {
        let text = fs::read_to_string(fixture_dir().join(format!("{name}.json"))).unwrap();
        assert_eq!(MetricSpec::from_json_str(&text).unwrap(), spec_by_name(name).unwrap(), "{name}");
    }
}

#[test]
fn euclidean_fixture_is_the_identity() {
    let text = fs::read_to_string(fixture_dir().join("euclidean.json")).unwrap();
    let m = Metric::from_spec(MetricSpec::from_json_str(&text).unwrap()).unwrap();
    assert_eq!(m.spec().family, "riemannian");
    assert_eq!(m.dim(), 2);
    let g = finsler_core::spray::fundamental_tensor(&m, &[0.3, -0.1], &[0.2, 0.7]).unwrap().matrix;
    assert!((g - nalgebra::DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
}
