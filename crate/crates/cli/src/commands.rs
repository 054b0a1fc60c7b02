//! One function per subcommand. Each writes its artifacts under `--out` and
//! prints a short summary to stdout.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use finsler_core::classify::{classify_report, ClassifyConfig, Sampled, YesNo};
use finsler_core::curvature::{flag, jacobi_spectrum, nonpositivity_scan};
use finsler_core::geodesics::{integrate_geodesic, local_distance, BvpOptions, GeodesicTrace, OdeOptions};
use finsler_core::metric::validate_spec;
use finsler_core::transport::{parallel_frame, parallel_transport};
use finsler_core::Metric;
use serde::Serialize;

use crate::output::{check_dim, say, envelope, format_point, load_metric, parse_point, write_artifact, CliResult, Failure};
use crate::{Common, Integrator};

/// Comma-separated coordinates.
#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_point(s).map(Coords)
    }
}

impl Integrator {
    fn options(&self) -> CliResult<OdeOptions> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Failure::input("--rtol and --atol must be positive"));
        }
        Ok(OdeOptions { rtol: self.rtol, atol: self.atol, ..OdeOptions::default() })
    }
}

fn yes_no(v: Option<YesNo>) -> &'static str {
    match v {
        Some(YesNo::Yes) => "yes",
        Some(YesNo::No) => "no",
        None => "unknown",
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Number of sampled base points.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

pub fn validate(a: ValidateArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    let report = validate_spec(&metric, a.samples, a.common.seed)?;
    let path = write_artifact(&a.common.out, "validate.json", &envelope("validate", &a, &report))?;
    say!("valid: {}", if report.passed { "yes" } else { "no" });
    if let Some(w) = report.failures.first() {
        say!("witness: x = {}, v = {}", format_point(&w.x), format_point(&w.v));
    }
    say!("report: {}", path.display());
    Ok(if report.passed { 0 } else { 1 })
}

#[derive(Args, Debug, Serialize)]
pub struct GeodesicArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    integrator: Integrator,
    /// Initial point.
    #[arg(long, allow_hyphen_values = true)]
    x0: Coords,
    /// Initial velocity.
    #[arg(long, allow_hyphen_values = true)]
    v0: Coords,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0, allow_hyphen_values = true)]
    t_end: f64,
    /// Rescale `v0` to `F(x0, v0) = 1` before integrating.
    #[arg(long)]
    unit_speed: bool,
}

fn initial_velocity(metric: &Metric, x0: &[f64], v0: &[f64], unit_speed: bool) -> CliResult<Vec<f64>> {
    check_dim("x", x0, metric.dim())?;
    check_dim("v", v0, metric.dim())?;
    if !unit_speed {
        return Ok(v0.to_vec());
    }
    let f = metric.norm(x0, v0)?;
    if !(f > 0.0) {
        return Err(Failure::input("--unit-speed needs a nonzero v0"));
    }
    Ok(v0.iter().map(|a| a / f).collect())
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    x0: &'a [f64],
    v0: &'a [f64],
    requested_end: f64,
    end_time: f64,
    end_point: &'a [f64],
    end_velocity: &'a [f64],
    exit_time: Option<f64>,
    max_speed_drift: f64,
    nodes: usize,
    rhs_evaluations: usize,
}

fn summarize(trace: &GeodesicTrace) -> TraceSummary<'_> {
    TraceSummary {
        x0: &trace.x[0],
        v0: &trace.v[0],
        requested_end: trace.requested_end,
        end_time: *trace.t.last().unwrap(),
        end_point: trace.end_point(),
        end_velocity: trace.end_velocity(),
        exit_time: trace.exit_time,
        max_speed_drift: trace.max_speed_drift(),
        nodes: trace.len(),
        rhs_evaluations: trace.rhs_evaluations(),
    }
}

pub fn geodesic(a: GeodesicArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    let v0 = initial_velocity(&metric, &a.x0.0, &a.v0.0, a.unit_speed)?;
    let trace = integrate_geodesic(&metric, &a.x0.0, &v0, a.t_end, &a.integrator.options()?)?;
    let csv = write_artifact(&a.common.out, "geodesic.csv", &trace.to_csv())?;
    let json = write_artifact(&a.common.out, "geodesic.json", &envelope("geodesic", &a, &summarize(&trace)))?;
    say!("endpoint: {}", format_point(trace.end_point()));
    if let Some(t) = trace.exit_time {
        say!("left the chart at t = {t}");
    }
    say!("trace: {}", csv.display());
    say!("report: {}", json.display());
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct DistanceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    integrator: Integrator,
    /// Start point.
    #[arg(long, allow_hyphen_values = true)]
    p: Coords,
    /// End point.
    #[arg(long, allow_hyphen_values = true)]
    q: Coords,
    /// Shooting tolerance on the endpoint.
    #[arg(long, default_value_t = 1e-11)]
    bvp_tol: f64,
}

pub fn distance(a: DistanceArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    check_dim("p", &a.p.0, metric.dim())?;
    check_dim("q", &a.q.0, metric.dim())?;
    if !(a.bvp_tol > 0.0) {
        return Err(Failure::input("--bvp-tol must be positive"));
    }
    let opts = BvpOptions { ode: a.integrator.options()?, tol: a.bvp_tol, ..BvpOptions::default() };
    let d = local_distance(&metric, &a.p.0, &a.q.0, &opts)?;
    let json = write_artifact(&a.common.out, "distance.json", &envelope("distance", &a, &d))?;
    say!("distance: {}", d.distance);
    say!("report: {}", json.display());
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct TransportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    integrator: Integrator,
    #[arg(long, allow_hyphen_values = true)]
    x0: Coords,
    #[arg(long, allow_hyphen_values = true)]
    v0: Coords,
    #[arg(long = "T", default_value_t = 1.0, allow_hyphen_values = true)]
    t_end: f64,
    /// Vector to transport; repeat for several. Defaults to the coordinate basis.
    #[arg(long = "w", allow_hyphen_values = true)]
    vectors: Vec<Coords>,
    #[arg(long)]
    unit_speed: bool,
}

#[derive(Serialize)]
struct TransportSummary<'a> {
    geodesic: TraceSummary<'a>,
    initial: Vec<Vec<f64>>,
    transported: Vec<Vec<f64>>,
    /// `max |F(W(t)) - F(W(0))| / F(W(0))` over vectors and nodes.
    max_norm_deviation: f64,
    parallel_residual: f64,
    min_abs_determinant: Option<f64>,
}

pub fn transport(a: TransportArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    let v0 = initial_velocity(&metric, &a.x0.0, &a.v0.0, a.unit_speed)?;
    for w in &a.vectors {
        check_dim("w", &w.0, metric.dim())?;
    }
    let trace = integrate_geodesic(&metric, &a.x0.0, &v0, a.t_end, &a.integrator.options()?)?;
    let frame = if a.vectors.is_empty() {
        parallel_frame(&metric, &trace)?
    } else {
        let ws: Vec<Vec<f64>> = a.vectors.iter().map(|w| w.0.clone()).collect();
        parallel_transport(&metric, &trace, &ws)?
    };
    let last = frame.trace.len() - 1;
    let max_norm_deviation = frame
        .norms
        .iter()
        .flat_map(|f| f.iter().map(move |x| if f[0] > 0.0 { (x - f[0]).abs() / f[0] } else { 0.0 }))
        .fold(0.0, f64::max);
    let summary = TransportSummary {
        geodesic: summarize(&trace),
        initial: frame.vectors.iter().map(|w| w[0].clone()).collect(),
        transported: frame.vectors.iter().map(|w| w[last].clone()).collect(),
        max_norm_deviation,
        parallel_residual: frame.parallel_residual(&metric)?,
        min_abs_determinant: frame.min_abs_determinant(),
    };
    let csv = write_artifact(&a.common.out, "transport.csv", &frame.to_csv())?;
    let json = write_artifact(&a.common.out, "transport.json", &envelope("transport", &a, &summary))?;
    for w in &summary.transported {
        say!("transported: {}", format_point(w));
    }
    say!("max norm deviation: {max_norm_deviation:e}");
    say!("history: {}", csv.display());
    say!("report: {}", json.display());
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct CurvatureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Base point; with --v gives the Jacobi spectrum there instead of a scan.
    #[arg(long, allow_hyphen_values = true, requires = "v")]
    x: Option<Coords>,
    /// Flagpole.
    #[arg(long, allow_hyphen_values = true, requires = "x")]
    v: Option<Coords>,
    /// Transverse edge; adds the flag curvature `K(x, v, w)`.
    #[arg(long, allow_hyphen_values = true, requires = "v")]
    w: Option<Coords>,
    /// Rescale `v` to `F(x, v) = 1`, so that the eigenvalues are flag curvatures.
    #[arg(long, requires = "v")]
    unit_speed: bool,
    /// Sample count of the nonpositivity scan.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Serialize)]
struct PointCurvature {
    spectrum: finsler_core::curvature::JacobiSpectrum,
    flag: Option<finsler_core::curvature::FlagData>,
}

pub fn curvature(a: CurvatureArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    let n = metric.dim();
    if let (Some(x), Some(v)) = (&a.x, &a.v) {
        check_dim("x", &x.0, n)?;
        let v = initial_velocity(&metric, &x.0, &v.0, a.unit_speed)?;
        let spectrum = jacobi_spectrum(&metric, &x.0, &v)?;
        let flag = match &a.w {
            Some(w) => {
                check_dim("w", &w.0, n)?;
                Some(flag(&metric, &x.0, &v, &w.0)?)
            }
            None => None,
        };
        if let Some(f) = &flag {
            say!("flag curvature: {}", f.curvature);
        }
        say!("eigenvalues: {}", format_point(&spectrum.eigenvalues));
        let result = PointCurvature { spectrum, flag };
        let json = write_artifact(&a.common.out, "curvature.json", &envelope("curvature", &a, &result))?;
        say!("report: {}", json.display());
        return Ok(0);
    }
    let report = nonpositivity_scan(&metric, None, a.samples, a.common.seed)?;
    let csv = write_artifact(&a.common.out, "curvature.csv", &report.to_csv())?;
    let json = write_artifact(&a.common.out, "curvature.json", &envelope("curvature", &a, &report))?;
    say!("flag_nonpositive: {}", if report.all_nonpositive { "yes" } else { "no" });
    say!("max flag curvature: {}", report.max_eigenvalue);
    say!("spectra: {}", csv.display());
    say!("report: {}", json.display());
    Ok(0)
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    /// JSON file with classification settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Busemann geodesic pairs.
    #[arg(long)]
    pairs: Option<usize>,
    /// Grid points per distance profile.
    #[arg(long)]
    grid: Option<usize>,
    /// Midpoint-convexity tolerance.
    #[arg(long)]
    busemann_tol: Option<f64>,
    #[arg(long)]
    berwald_samples: Option<usize>,
    #[arg(long)]
    curvature_samples: Option<usize>,
    #[arg(long)]
    loops: Option<usize>,
    #[arg(long)]
    kappa_samples: Option<usize>,
    /// Exit with status 1 when a verdict is negative.
    #[arg(long)]
    strict: bool,
    /// Also write the distance profiles and curvature spectra as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Serialize)]
struct ClassifyRun<'a> {
    #[serde(flatten)]
    common: &'a Common,
    strict: bool,
    classify: &'a ClassifyConfig,
}

fn classify_config(a: &ClassifyArgs) -> CliResult<ClassifyConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => ClassifyConfig::default(),
    };
    c.seed = a.common.seed;
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut c.busemann_pairs, a.pairs);
    set(&mut c.busemann_grid, a.grid);
    set(&mut c.berwald_samples, a.berwald_samples);
    set(&mut c.curvature_samples, a.curvature_samples);
    set(&mut c.holonomy_loops, a.loops);
    set(&mut c.kappa_samples, a.kappa_samples);
    if let Some(t) = a.busemann_tol {
        c.busemann_tol = t;
    }
    Ok(c)
}

pub fn classify(a: ClassifyArgs) -> CliResult<u8> {
    let metric = load_metric(&a.common.metric)?;
    let config = classify_config(&a)?;
    let report = classify_report(&metric, &config)?;
    let run = ClassifyRun { common: &a.common, strict: a.strict, classify: &config };
    let json = write_artifact(&a.common.out, "classify.json", &envelope("classify", &run, &report))?;
    if a.csv {
        if let Some(b) = &report.stages.busemann {
            say!("profiles: {}", write_artifact(&a.common.out, "busemann.csv", &b.to_csv())?.display());
        }
        if let Some(c) = &report.stages.curvature {
            say!("spectra: {}", write_artifact(&a.common.out, "curvature.csv", &c.to_csv())?.display());
        }
    }
    let v = &report.verdicts;
    say!("berwald: {}", yes_no(v.berwald));
    say!("flag_nonpositive: {}", yes_no(v.flag_nonpositive));
    let busemann = match v.busemann_sampled {
        Some(Sampled::Pass) => "pass",
        Some(Sampled::Violated) => "violated",
        None => "unknown",
    };
    say!("busemann_sampled: {busemann}");
    if let Some(c) = report.theorem_consistent {
        say!("theorem_consistent: {c}");
    }
    say!("report: {}", json.display());
    if report.incomplete {
        for f in &report.failures {
            eprintln!("stage {} failed: {}", f.stage, f.error);
        }
        return Ok(crate::output::NUMERICAL_FAILURE);
    }
    Ok(if a.strict && report.has_negative_verdict() { 1 } else { 0 })
}
