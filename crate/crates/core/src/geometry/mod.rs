//! Riemannian metrics on the noise space, discrete path energies, geodesic
//! optimization and closed-form interpolation baselines.

mod geodesic;
mod interp;
mod metric;
mod path;
mod spectral;

pub use geodesic::{geodesic_optimize, GeodesicConfig, GeodesicResult, GeodesicStatus, LrSchedule, PathInit};
pub use interp::{angle_between, lerp, slerp, SLERP_MIN_ANGLE};
pub use metric::{ConformalDensity, MetricSpec, NoiseSpace};
pub use path::{Path, PathMeta};
pub use spectral::{argmin_direction_2d, line_angle, spectral_analysis, Spectrum};
