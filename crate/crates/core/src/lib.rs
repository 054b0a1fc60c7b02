//! Numerical tools for smooth Finsler metrics on a single coordinate chart:
//! geodesics, linear parallel transport, Jacobi fields, flag curvature and
//! rigidity tests (Berwald detection, norm preservation, Busemann convexity).

pub mod classify;
pub mod curvature;
pub mod error;
pub mod fixtures;
pub mod geodesics;
pub mod jets;
pub mod metric;
pub mod sampling;
pub mod spray;
pub mod transport;

pub use error::{Error, Result};
pub use metric::{ChartBox, Metric, MetricSpec};
