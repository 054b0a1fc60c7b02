//! `finsler`: command-line front end for finsler-core.
//!
//! Exit status: 0 success, 1 negative verdict with witness (`validate`, and
//! `classify --strict`), 2 input error, 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::output::Failure;

#[derive(Parser, Debug)]
#[command(name = "finsler", version, about = "Numerical toolkit for Finsler metrics on coordinate charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Metric spec (JSON).
    #[arg(long)]
    pub metric: PathBuf,
    /// Master seed for every sampled quantity.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for JSON and CSV artifacts.
    #[arg(long, env = "FINSLER_OUT", default_value = "finsler-out")]
    pub out: PathBuf,
}

/// Step-size control of the geodesic integrator.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Integrator {
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-11)]
    pub atol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample positivity, homogeneity and strong convexity of the metric.
    Validate(commands::ValidateArgs),
    /// Integrate a geodesic and write its trace.
    Geodesic(commands::GeodesicArgs),
    /// Forward distance between two nearby points.
    Distance(commands::DistanceArgs),
    /// Linear parallel transport along a geodesic.
    Transport(commands::TransportArgs),
    /// Flag curvature, Jacobi spectrum, or a nonpositivity scan.
    Curvature(commands::CurvatureArgs),
    /// Full classification report.
    Classify(commands::ClassifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Geodesic(a) => commands::geodesic(a),
        Command::Distance(a) => commands::distance(a),
        Command::Transport(a) => commands::transport(a),
        Command::Curvature(a) => commands::curvature(a),
        Command::Classify(a) => commands::classify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
