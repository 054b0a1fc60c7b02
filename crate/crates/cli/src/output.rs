//! Spec loading, artifact writing and error-to-exit-code mapping.

use std::fs;
use std::path::{Path, PathBuf};

use finsler_core::{Error, Metric, MetricSpec};
use serde::Serialize;

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}
pub(crate) use say;

pub const INPUT_ERROR: u8 = 2;
pub const NUMERICAL_FAILURE: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { code: INPUT_ERROR, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { INPUT_ERROR } else { NUMERICAL_FAILURE };
        Failure { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn load_spec(path: &Path) -> CliResult<MetricSpec> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    MetricSpec::from_json_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_metric(path: &Path) -> CliResult<Metric> {
    Ok(Metric::from_spec(load_spec(path)?)?)
}

/// Comma-separated coordinates, e.g. `0.1,-0.2`.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<Vec<f64>, String>>()
        .and_then(|v| if v.iter().all(|a| a.is_finite()) { Ok(v) } else { Err("coordinates must be finite".into()) })
}

pub fn check_dim(name: &str, v: &[f64], dim: usize) -> CliResult<()> {
    if v.len() != dim {
        return Err(Failure::input(format!("--{name} has {} coordinates, the metric has dimension {dim}", v.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    result: &'a R,
}

pub fn envelope<C: Serialize, R: Serialize>(command: &str, config: &C, result: &R) -> String {
    let doc = Envelope { tool: "finsler", version: env!("CARGO_PKG_VERSION"), command, config, result };
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

/// Writes `name` under `dir`, creating the directory, and returns the path.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn format_point(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(",")
}
