use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};

use super::metric::NoiseSpace;
use crate::error::{Error, Result};
use crate::nn::EpsModel;

/// Singular value decomposition of the score Jacobian at one point.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Descending.
    pub singular_values: Array1<f64>,
    /// Column `k` is the right singular vector of `singular_values[k]`.
    pub right_vectors: Array2<f64>,
}

impl Spectrum {
    /// Number of singular values below `threshold`: a proxy for the local
    /// intrinsic dimension.
    pub fn intrinsic_dim(&self, threshold: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s < threshold).count()
    }

    /// Right singular vector of the smallest singular value.
    pub fn softest_direction(&self) -> ArrayView1<'_, f64> {
        self.right_vectors.column(self.right_vectors.ncols() - 1)
    }

    /// `sigma_max / sigma_min`; infinite for a singular Jacobian.
    pub fn condition(&self) -> f64 {
        let n = self.singular_values.len();
        self.singular_values[0] / self.singular_values[n - 1]
    }
}

/// Dense SVD of the score Jacobian at `x`.
pub fn spectral_analysis<M: EpsModel + ?Sized>(space: &NoiseSpace<M>, x: ArrayView1<f64>) -> Result<Spectrum> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral analysis point"));
    }
    let j = space.score_jacobian(x)?;
    let d = j.nrows();
    let m = DMatrix::from_fn(d, j.ncols(), |r, c| j[[r, c]]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values = order.iter().map(|&k| svd.singular_values[k]).collect();
    let right_vectors = Array2::from_shape_fn((j.ncols(), order.len()), |(r, c)| v_t[(order[c], r)]);
    Ok(Spectrum { singular_values, right_vectors })
}

/// Unit vector minimizing `|J v|^2` over `n_angles` directions evenly spaced
/// in `[0, pi)`. Two-dimensional spaces only.
pub fn argmin_direction_2d<M: EpsModel + ?Sized>(
    space: &NoiseSpace<M>,
    x: ArrayView1<f64>,
    n_angles: usize,
) -> Result<Array1<f64>> {
    if x.len() != 2 {
        return Err(Error::InvalidArgument(format!("direction search needs D = 2, got {}", x.len())));
    }
    if n_angles == 0 {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    let j = space.score_jacobian(x)?;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..n_angles {
        let theta = std::f64::consts::PI * k as f64 / n_angles as f64;
        let v = ndarray::array![theta.cos(), theta.sin()];
        let jv = j.dot(&v);
        let q = jv.dot(&jv);
        if q < best.0 {
            best = (q, theta);
        }
    }
    Ok(ndarray::array![best.1.cos(), best.1.sin()])
}

/// Angle between the lines spanned by two nonzero vectors, in `[0, pi/2]`.
pub fn line_angle(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let c = a.dot(&b).abs() / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
    c.clamp(0.0, 1.0).acos()
}
