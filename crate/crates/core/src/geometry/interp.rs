use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Below this angle spherical interpolation degenerates to linear.
pub const SLERP_MIN_ANGLE: f64 = 1e-6;

/// `(1 - u) x0 + u x1`.
pub fn lerp(x0: ArrayView1<f64>, x1: ArrayView1<f64>, u: f64) -> Array1<f64> {
    &x0 * (1.0 - u) + &x1 * u
}

/// Angle between two nonzero vectors.
pub fn angle_between(x0: ArrayView1<f64>, x1: ArrayView1<f64>) -> Result<f64> {
    let n0 = x0.dot(&x0).sqrt();
    let n1 = x1.dot(&x1).sqrt();
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::InvalidArgument("slerp endpoints must be nonzero".into()));
    }
    Ok((x0.dot(&x1) / (n0 * n1)).clamp(-1.0, 1.0).acos())
}

/// Spherical linear interpolation along the great circle through `x0` and `x1`.
///
/// Falls back to [`lerp`] when the angle is below [`SLERP_MIN_ANGLE`]; nearly
/// antipodal endpoints have no unique arc and are rejected.
pub fn slerp(x0: ArrayView1<f64>, x1: ArrayView1<f64>, u: f64) -> Result<Array1<f64>> {
    let theta = angle_between(x0, x1)?;
    if theta < SLERP_MIN_ANGLE {
        return Ok(lerp(x0, x1, u));
    }
    if std::f64::consts::PI - theta < SLERP_MIN_ANGLE {
        return Err(Error::Antipodal { angle: theta });
    }
    let s = theta.sin();
    Ok(&x0 * (((1.0 - u) * theta).sin() / s) + &x1 * ((u * theta).sin() / s))
}
