//! The synthetic C-shaped distribution and its analytic noised densities.
//!
//! Samples are points of the ellipse `(a cos phi, b sin phi)` with `phi` uniform on
//! the retained angles (a symmetric wedge around the positive first axis is
//! removed), plus small isotropic Gaussian noise. Under the forward process
//! `x_t = sqrt(ab) x_0 + sqrt(1 - ab) eps` the marginal is a continuous mixture of
//! isotropic Gaussians along the scaled arc, which [`DensityOracle`] evaluates with
//! a midpoint rule in the angle.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

/// Parameters of the C-shaped dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct CShapeSpec {
    /// Semi-axis along the first coordinate.
    pub semi_axis_x: f64,
    /// Semi-axis along the second coordinate.
    pub semi_axis_y: f64,
    /// Half-angle of the removed wedge, in degrees, centered on the positive first axis.
    pub wedge_half_angle_deg: f64,
    /// Per-coordinate std of the Gaussian perturbation.
    pub noise_std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for CShapeSpec {
    fn default() -> Self {
        Self {
            semi_axis_x: 1.0,
            semi_axis_y: 1.2,
            wedge_half_angle_deg: 30.0,
            noise_std: 0.001,
            n_samples: 100_000,
            seed: 0,
        }
    }
}

impl CShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.semi_axis_x > 0.0 && self.semi_axis_y > 0.0) {
            return Err(Error::InvalidArgument("semi-axes must be positive".into()));
        }
        if !(self.wedge_half_angle_deg > 0.0 && self.wedge_half_angle_deg < 180.0) {
            return Err(Error::InvalidArgument("wedge half-angle must lie in (0, 180) degrees".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument("noise std must be nonnegative".into()));
        }
        Ok(())
    }

    /// Retained angles `[w, 2 pi - w]` in radians.
    pub fn angle_range(&self) -> (f64, f64) {
        let w = self.wedge_half_angle_deg.to_radians();
        (w, 2.0 * PI - w)
    }

    pub fn point(&self, phi: f64) -> [f64; 2] {
        [self.semi_axis_x * phi.cos(), self.semi_axis_y * phi.sin()]
    }

    /// Unit tangent of the ellipse at angle `phi`, in the direction of increasing angle.
    pub fn unit_tangent(&self, phi: f64) -> [f64; 2] {
        let t = [-self.semi_axis_x * phi.sin(), self.semi_axis_y * phi.cos()];
        let n = t[0].hypot(t[1]);
        [t[0] / n, t[1] / n]
    }

    /// Elliptic angle `atan2(y / b, x / a)` mapped to `[0, 2 pi)`.
    pub fn angle_of(&self, x: ArrayView1<f64>) -> f64 {
        (x[1] / self.semi_axis_y).atan2(x[0] / self.semi_axis_x).rem_euclid(2.0 * PI)
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        [
            ("semi-axis-x", self.semi_axis_x.to_string()),
            ("semi-axis-y", self.semi_axis_y.to_string()),
            ("wedge-half-angle-deg", self.wedge_half_angle_deg.to_string()),
            ("noise-std", self.noise_std.to_string()),
            ("samples", self.n_samples.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Draws `n` samples from the C-shape, deterministically from `spec.seed`.
pub fn sample(spec: &CShapeSpec, n: usize) -> Result<Array2<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = seed::rng(spec.seed);
    let (lo, hi) = spec.angle_range();
    let mut out = Array2::zeros((n, 2));
    for mut row in out.rows_mut() {
        let phi = rng.gen_range(lo..hi);
        let p = spec.point(phi);
        for (k, c) in p.into_iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            row[k] = c + spec.noise_std * z;
        }
    }
    Ok(out)
}

/// Exponents below `-CUTOFF` contribute less than `e^-50` relative to the largest
/// term and are skipped.
const LOG_CUTOFF: f64 = 50.0;

/// Midpoint-rule evaluation of the time-t marginal density of the C-shape.
#[derive(Clone, Debug)]
pub struct DensityOracle {
    spec: CShapeSpec,
    angles: Vec<f64>,
    nodes: Vec<[f64; 2]>,
    arc_weights: Vec<f64>,
}

impl DensityOracle {
    pub const DEFAULT_NODES: usize = 4096;

    pub fn new(spec: &CShapeSpec, n_nodes: usize) -> Result<Self> {
        spec.validate()?;
        if n_nodes == 0 {
            return Err(Error::InvalidArgument("need at least one quadrature node".into()));
        }
        let (lo, hi) = spec.angle_range();
        let h = (hi - lo) / n_nodes as f64;
        let angles: Vec<f64> = (0..n_nodes).map(|k| lo + (k as f64 + 0.5) * h).collect();
        // mirror the lower half so the node set is exactly symmetric about the first axis
        let mut nodes: Vec<[f64; 2]> = angles.iter().map(|&phi| spec.point(phi)).collect();
        for k in 0..n_nodes / 2 {
            let [x, y] = nodes[k];
            nodes[n_nodes - 1 - k] = [x, -y];
        }
        if n_nodes % 2 == 1 {
            nodes[n_nodes / 2][1] = 0.0;
        }
        let arc_weights = angles
            .iter()
            .map(|&phi| h * (spec.semi_axis_x * phi.sin()).hypot(spec.semi_axis_y * phi.cos()))
            .collect();
        Ok(Self { spec: spec.clone(), angles, nodes, arc_weights })
    }

    pub fn with_default_nodes(spec: &CShapeSpec) -> Result<Self> {
        Self::new(spec, Self::DEFAULT_NODES)
    }

    pub fn spec(&self) -> &CShapeSpec {
        &self.spec
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Arc-length element of each node; sums to the retained arc length.
    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    /// Mean of the noiseless data distribution (angle-uniform on the arc).
    pub fn arc_mean(&self) -> [f64; 2] {
        let k = self.nodes.len() as f64;
        let sx = self.nodes.iter().map(|p| p[0]).sum::<f64>();
        let sy = self.nodes.iter().map(|p| p[1]).sum::<f64>();
        [sx / k, sy / k]
    }

    /// Isotropic variance of each mixture component at cumulative signal level `ab`.
    pub fn component_variance(&self, alpha_bar: f64) -> f64 {
        alpha_bar * self.spec.noise_std.powi(2) + (1.0 - alpha_bar)
    }

    fn check(&self, x: ArrayView1<f64>, alpha_bar: f64) -> Result<()> {
        if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha_bar = {alpha_bar} outside (0, 1]")));
        }
        if x.len() != 2 {
            return Err(Error::InvalidArgument(format!("density query has dimension {}", x.len())));
        }
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::NonFinite("density query"));
        }
        if self.component_variance(alpha_bar) <= 0.0 {
            return Err(Error::InvalidArgument("degenerate density: zero variance".into()));
        }
        Ok(())
    }

    /// `log p_t(x)` together with `grad_x log p_t(x)`.
    pub fn log_density_and_grad(&self, x: ArrayView1<f64>, alpha_bar: f64) -> Result<(f64, [f64; 2])> {
        self.check(x, alpha_bar)?;
        let var = self.component_variance(alpha_bar);
        let scale = alpha_bar.sqrt();
        let (px, py) = (x[0], x[1]);
        let sq = |n: &[f64; 2]| {
            let dx = scale * n[0] - px;
            let dy = scale * n[1] - py;
            dx * dx + dy * dy
        };
        let min_sq = self.nodes.iter().map(sq).fold(f64::INFINITY, f64::min);
        let inv2v = 0.5 / var;
        let (mut total, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for n in &self.nodes {
            let dx = scale * n[0] - px;
            let dy = scale * n[1] - py;
            let e = (dx * dx + dy * dy - min_sq) * inv2v;
            if e < LOG_CUTOFF {
                let r = (-e).exp();
                total += r;
                gx += r * dx;
                gy += r * dy;
            }
        }
        let k = self.nodes.len() as f64;
        let log_p = -min_sq * inv2v + total.ln() - k.ln() - (2.0 * PI * var).ln();
        Ok((log_p, [gx / (total * var), gy / (total * var)]))
    }

    pub fn log_density_t(&self, x: ArrayView1<f64>, alpha_bar: f64) -> Result<f64> {
        Ok(self.log_density_and_grad(x, alpha_bar)?.0)
    }

    /// `p_t(x)` with `alpha_bar` the cumulative signal coefficient of the marginal;
    /// `alpha_bar = 1` is the data density itself.
    pub fn density_t(&self, x: ArrayView1<f64>, alpha_bar: f64) -> Result<f64> {
        Ok(self.log_density_t(x, alpha_bar)?.exp())
    }

    /// Densities of every row of `xs`.
    pub fn density_rows(&self, xs: &Array2<f64>, alpha_bar: f64) -> Result<Array1<f64>> {
        xs.rows().into_iter().map(|r| self.density_t(r, alpha_bar)).collect::<Result<Vec<_>>>().map(Array1::from)
    }
}
