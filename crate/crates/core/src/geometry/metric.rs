use std::sync::Arc;

use ndarray::{s, stack, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::path::Path;
use crate::data::DensityOracle;
use crate::diffusion::{score_scale, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::EpsModel;

/// The noise space at one timestep: where metrics are evaluated.
pub struct NoiseSpace<'a, M: EpsModel + ?Sized> {
    pub model: &'a M,
    pub schedule: &'a NoiseSchedule,
    pub timestep: usize,
}

impl<M: EpsModel + ?Sized> Clone for NoiseSpace<'_, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M: EpsModel + ?Sized> Copy for NoiseSpace<'_, M> {}

impl<'a, M: EpsModel + ?Sized> NoiseSpace<'a, M> {
    pub fn new(model: &'a M, schedule: &'a NoiseSchedule, timestep: usize) -> Result<Self> {
        schedule.check(timestep)?;
        Ok(Self { model, schedule, timestep })
    }

    pub fn alpha_bar(&self) -> f64 {
        self.schedule.alpha_bar(self.timestep)
    }

    fn t_norm(&self) -> f64 {
        self.schedule.t_norm(self.timestep)
    }

    /// Scores `s(x) = -eps(x) / sqrt(1 - ab)` of every row.
    pub fn scores(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let c = score_scale(self.schedule, self.timestep)?;
        Ok(self.model.eps_batch(xs, self.t_norm()) * c)
    }

    /// Dense score Jacobian `d s / d x` at `x`.
    pub fn score_jacobian(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        let c = score_scale(self.schedule, self.timestep)?;
        Ok(self.model.jacobian(x, self.t_norm()) * c)
    }
}

/// Density-weighted conformal metric `G(x) = p_t(x)^(-exponent) I`.
#[derive(Clone, Debug)]
pub struct ConformalDensity {
    pub oracle: Arc<DensityOracle>,
    pub exponent: f64,
}

impl ConformalDensity {
    /// Exponent `2 / D`, which makes curve length `int |x'| / p^(1/D)`.
    pub fn new(oracle: Arc<DensityOracle>, dim: usize) -> Self {
        Self { oracle, exponent: 2.0 / dim as f64 }
    }

    /// Conformal factor and its gradient at `x`.
    fn factor_and_grad(&self, x: ArrayView1<f64>, alpha_bar: f64) -> Result<(f64, [f64; 2])> {
        let (log_p, g) = self.oracle.log_density_and_grad(x, alpha_bar)?;
        let factor = (-self.exponent * log_p).exp();
        if !factor.is_finite() {
            return Err(Error::ZeroDensity { x0: x[0], x1: x[1] });
        }
        let k = -self.exponent * factor;
        Ok((factor, [k * g[0], k * g[1]]))
    }
}

/// Which Riemannian metric governs lengths and energies.
#[derive(Clone, Debug)]
pub enum MetricSpec {
    Euclidean,
    /// Pullback of the Euclidean metric through the score: `G = J^T J`.
    Jacobian,
    /// `G = J^T J + lambda I`.
    JacobianRegularized { lambda: f64 },
    ConformalDensity(ConformalDensity),
}

impl MetricSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean => "euclidean",
            MetricSpec::Jacobian => "jacobian",
            MetricSpec::JacobianRegularized { .. } => "jacobian-regularized",
            MetricSpec::ConformalDensity(_) => "conformal-density",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MetricSpec::JacobianRegularized { lambda } if !(*lambda > 0.0) => {
                Err(Error::InvalidArgument(format!("regularization lambda = {lambda} must be positive")))
            }
            MetricSpec::ConformalDensity(c) if !(c.exponent > 0.0) => {
                Err(Error::InvalidArgument("conformal exponent must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// `g_x(v, w)`.
    pub fn inner<M: EpsModel + ?Sized>(
        &self,
        space: &NoiseSpace<M>,
        x: ArrayView1<f64>,
        v: ArrayView1<f64>,
        w: ArrayView1<f64>,
    ) -> Result<f64> {
        self.validate()?;
        if v.iter().chain(w.iter()).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("tangent vector"));
        }
        let euclid = v.dot(&w);
        match self {
            MetricSpec::Euclidean => Ok(euclid),
            MetricSpec::Jacobian | MetricSpec::JacobianRegularized { .. } => {
                let c = score_scale(space.schedule, space.timestep)?;
                let xs = stack![Axis(0), x, x];
                let vs = stack![Axis(0), v, w];
                let jv = space.model.jvp_batch(xs.view(), space.t_norm(), vs.view());
                let pulled = c * c * jv.row(0).dot(&jv.row(1));
                match self {
                    MetricSpec::JacobianRegularized { lambda } => Ok(pulled + lambda * euclid),
                    _ => Ok(pulled),
                }
            }
            MetricSpec::ConformalDensity(conf) => {
                let (factor, _) = conf.factor_and_grad(x, space.alpha_bar())?;
                Ok(factor * euclid)
            }
        }
    }

    /// `g_x(v, v)`.
    pub fn apply<M: EpsModel + ?Sized>(&self, space: &NoiseSpace<M>, x: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
        self.inner(space, x, v, v)
    }

    /// Per-segment squared lengths `q_i` of the discretization: score differences
    /// for the Jacobian metrics, midpoint-evaluated `g` otherwise.
    fn segment_sq_lengths<M: EpsModel + ?Sized>(&self, space: &NoiseSpace<M>, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.validate()?;
        let dx = &points.slice(s![1.., ..]) - &points.slice(s![..-1, ..]);
        let euclid = dx.mapv(|v| v * v).sum_axis(Axis(1));
        match self {
            MetricSpec::Euclidean => Ok(euclid),
            MetricSpec::Jacobian | MetricSpec::JacobianRegularized { .. } => {
                let scores = space.scores(points)?;
                let ds = &scores.slice(s![1.., ..]) - &scores.slice(s![..-1, ..]);
                let pulled = ds.mapv(|v| v * v).sum_axis(Axis(1));
                match self {
                    MetricSpec::JacobianRegularized { lambda } => Ok(pulled + euclid * *lambda),
                    _ => Ok(pulled),
                }
            }
            MetricSpec::ConformalDensity(conf) => {
                let mids = (&points.slice(s![1.., ..]) + &points.slice(s![..-1, ..])) * 0.5;
                let mut q = euclid;
                for (i, m) in mids.rows().into_iter().enumerate() {
                    q[i] *= conf.factor_and_grad(m, space.alpha_bar())?.0;
                }
                Ok(q)
            }
        }
    }

    /// Discrete energy `1/2 sum_i q_i / du`.
    pub fn path_energy<M: EpsModel + ?Sized>(&self, space: &NoiseSpace<M>, path: &Path) -> Result<f64> {
        let q = self.segment_sq_lengths(space, path.points())?;
        Ok(0.5 * q.sum() / path.delta_u())
    }

    /// Discrete length `sum_i sqrt(q_i)`; satisfies `L^2 <= 2 E` by Cauchy-Schwarz.
    pub fn path_length<M: EpsModel + ?Sized>(&self, space: &NoiseSpace<M>, path: &Path) -> Result<f64> {
        let q = self.segment_sq_lengths(space, path.points())?;
        Ok(q.iter().map(|v| v.sqrt()).sum())
    }

    /// Energy of a discretized path and its gradient with respect to every point.
    /// Endpoint rows of the gradient are zero.
    pub(crate) fn energy_and_grad<M: EpsModel + ?Sized>(
        &self,
        space: &NoiseSpace<M>,
        points: ArrayView2<f64>,
    ) -> Result<(f64, Array2<f64>)> {
        self.validate()?;
        let n = points.nrows() - 1;
        let du = 1.0 / n as f64;
        let dx = &points.slice(s![1.., ..]) - &points.slice(s![..-1, ..]);
        let euclid = dx.mapv(|v| v * v).sum_axis(Axis(1));
        let mut grad = Array2::zeros(points.raw_dim());
        let second_difference = |d: &Array2<f64>| -> Array2<f64> {
            // d E / d p_i for E = 1/2 sum |d_i|^2 / du, interior i only
            (&d.slice(s![..-1, ..]) - &d.slice(s![1.., ..])) / du
        };
        // per-segment terms summed exactly as in `path_energy`, so both agree bitwise
        let q = match self {
            MetricSpec::Euclidean => {
                grad.slice_mut(s![1..-1, ..]).assign(&second_difference(&dx));
                euclid
            }
            MetricSpec::Jacobian | MetricSpec::JacobianRegularized { .. } => {
                let c = score_scale(space.schedule, space.timestep)?;
                let scores = space.model.eps_batch(points, space.t_norm()) * c;
                let ds = &scores.slice(s![1.., ..]) - &scores.slice(s![..-1, ..]);
                let mut q = ds.mapv(|v| v * v).sum_axis(Axis(1));
                if n > 1 {
                    let cot = second_difference(&ds) * c;
                    let interior = points.slice(s![1..-1, ..]);
                    let g = space.model.vjp_batch(interior, space.t_norm(), cot.view());
                    grad.slice_mut(s![1..-1, ..]).assign(&g);
                }
                if let MetricSpec::JacobianRegularized { lambda } = self {
                    q = q + &euclid * *lambda;
                    let reg = second_difference(&dx) * *lambda;
                    grad.slice_mut(s![1..-1, ..]).zip_mut_with(&reg, |g, r| *g += r);
                }
                q
            }
            MetricSpec::ConformalDensity(conf) => {
                let ab = space.alpha_bar();
                let mut q = euclid;
                for i in 0..n {
                    let m = (&points.row(i) + &points.row(i + 1)) * 0.5;
                    let (f, fg) = conf.factor_and_grad(m.view(), ab)?;
                    let d = dx.row(i);
                    let sq = q[i];
                    q[i] *= f;
                    // term_i = f(m_i) |d_i|^2 / (2 du), m_i = (p_i + p_{i+1}) / 2, d_i = p_{i+1} - p_i
                    for k in 0..d.len() {
                        let shared = 0.25 * sq * fg[k] / du;
                        let stretch = f * d[k] / du;
                        grad[[i, k]] += shared - stretch;
                        grad[[i + 1, k]] += shared + stretch;
                    }
                }
                grad.row_mut(0).fill(0.0);
                grad.row_mut(n).fill(0.0);
                q
            }
        };
        Ok((0.5 * q.sum() / du, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CShapeSpec;
    use crate::nn::{LinearEps, ScoreNet};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle() -> Arc<DensityOracle> {
        Arc::new(DensityOracle::new(&CShapeSpec::default(), 1024).unwrap())
    }

    fn all_specs() -> Vec<MetricSpec> {
        vec![
            MetricSpec::Euclidean,
            MetricSpec::Jacobian,
            MetricSpec::JacobianRegularized { lambda: 0.3 },
            MetricSpec::ConformalDensity(ConformalDensity::new(oracle(), 2)),
        ]
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        let sched = NoiseSchedule::default();
        let net = ScoreNet::new(2, 16, &mut ChaCha8Rng::seed_from_u64(1));
        let space = NoiseSpace::new(&net, &sched, 20).unwrap();
        for spec in all_specs() {
            let g = spec.apply(&space, array![0.1, 0.9].view(), array![0.0, 0.0].view()).unwrap();
            assert_eq!(g, 0.0, "{}", spec.name());
        }
    }

    #[test]
    fn linear_model_metric_is_scaled_identity() {
        let sched = NoiseSchedule::default();
        let model = LinearEps::identity(2);
        let t = 20;
        let space = NoiseSpace::new(&model, &sched, t).unwrap();
        let v = array![0.3, -1.7];
        let g = MetricSpec::Jacobian.apply(&space, array![2.0, 1.0].view(), v.view()).unwrap();
        let expected = v.dot(&v) / (1.0 - sched.alpha_bar(t));
        assert!((g - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn invariants_on_random_inputs() {
        let sched = NoiseSchedule::default();
        let net = ScoreNet::new(2, 16, &mut ChaCha8Rng::seed_from_u64(2));
        let space = NoiseSpace::new(&net, &sched, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = array![rng.gen_range(-1.0..1.0), rng.gen_range(-1.2..1.2)];
            let v = array![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let w = array![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a: f64 = rng.gen_range(-3.0..3.0);
            for spec in all_specs() {
                let gvv = spec.apply(&space, x.view(), v.view()).unwrap();
                assert!(gvv >= 0.0);
                let gav = spec.apply(&space, x.view(), (&v * a).view()).unwrap();
                assert!((gav - a * a * gvv).abs() <= 1e-10 * gav.abs().max(1e-300));
                let gvw = spec.inner(&space, x.view(), v.view(), w.view()).unwrap();
                let gwv = spec.inner(&space, x.view(), w.view(), v.view()).unwrap();
                assert!((gvw - gwv).abs() <= 1e-10 * gvw.abs().max(1e-12));
                // polarization: g(v, w) = (g(v + w) - g(v - w)) / 4
                let plus = spec.apply(&space, x.view(), (&v + &w).view()).unwrap();
                let minus = spec.apply(&space, x.view(), (&v - &w).view()).unwrap();
                let pol = (plus - minus) / 4.0;
                assert!((pol - gvw).abs() <= 1e-10 * plus.abs().max(minus.abs()).max(1e-12));
            }
            let j = MetricSpec::Jacobian.apply(&space, x.view(), v.view()).unwrap();
            let r = MetricSpec::JacobianRegularized { lambda: 0.3 }.apply(&space, x.view(), v.view()).unwrap();
            assert!((r - j - 0.3 * v.dot(&v)).abs() < 1e-10 * r);
        }
    }

    #[test]
    fn jacobian_metric_rejects_clean_time_and_bad_lambda() {
        let sched = NoiseSchedule::default();
        let model = LinearEps::identity(2);
        let space = NoiseSpace::new(&model, &sched, 0).unwrap();
        let v = array![1.0, 0.0];
        assert!(MetricSpec::Jacobian.apply(&space, v.view(), v.view()).is_err());
        assert!(MetricSpec::Euclidean.apply(&space, v.view(), v.view()).is_ok());
        let space = NoiseSpace::new(&model, &sched, 10).unwrap();
        assert!(MetricSpec::JacobianRegularized { lambda: 0.0 }.apply(&space, v.view(), v.view()).is_err());
    }

    #[test]
    fn conformal_rejects_vanishing_density() {
        let sched = NoiseSchedule::default();
        let model = LinearEps::identity(2);
        let space = NoiseSpace::new(&model, &sched, 0).unwrap();
        let spec = MetricSpec::ConformalDensity(ConformalDensity::new(oracle(), 2));
        let far = array![50.0, 50.0];
        assert!(matches!(spec.apply(&space, far.view(), far.view()), Err(Error::ZeroDensity { .. })));
    }

    #[test]
    fn energy_and_length_closed_forms() {
        let sched = NoiseSchedule::default();
        let model = LinearEps::identity(2);
        let t = 20;
        let space = NoiseSpace::new(&model, &sched, t).unwrap();
        let a = array![0.3, 1.1];
        let b = array![-0.8, -0.6];
        let line = Path::lerp(t, a.view(), b.view(), 10).unwrap();
        let delta = &b - &a;
        let sq = delta.dot(&delta);
        let e = MetricSpec::Euclidean.path_energy(&space, &line).unwrap();
        assert!((e - 0.5 * sq).abs() < 1e-10);
        let l = MetricSpec::Euclidean.path_length(&space, &line).unwrap();
        assert!((l - sq.sqrt()).abs() < 1e-12);
        let ej = MetricSpec::Jacobian.path_energy(&space, &line).unwrap();
        assert!((ej - e / (1.0 - sched.alpha_bar(t))).abs() < 1e-9 * ej);

        let constant = Path::new(t, Array2::from_shape_fn((5, 2), |(_, k)| a[k])).unwrap();
        for spec in all_specs() {
            assert_eq!(spec.path_energy(&space, &constant).unwrap(), 0.0);
            assert_eq!(spec.path_length(&space, &constant).unwrap(), 0.0);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let sched = NoiseSchedule::default();
        let net = ScoreNet::new(2, 16, &mut ChaCha8Rng::seed_from_u64(4));
        let space = NoiseSpace::new(&net, &sched, 20).unwrap();
        let path = Path::slerp(20, array![0.0, 1.15].view(), array![-0.8, -0.6].view(), 6).unwrap();
        for spec in all_specs() {
            let (e, grad) = spec.energy_and_grad(&space, path.points()).unwrap();
            assert_eq!(e, spec.path_energy(&space, &path).unwrap());
            assert!(grad.row(0).iter().chain(grad.row(6).iter()).all(|&g| g == 0.0));
            let h = 1e-6;
            for i in 1..6 {
                for k in 0..2 {
                    let mut plus = path.points().to_owned();
                    plus[[i, k]] += h;
                    let mut minus = path.points().to_owned();
                    minus[[i, k]] -= h;
                    let fd = (spec.energy_and_grad(&space, plus.view()).unwrap().0
                        - spec.energy_and_grad(&space, minus.view()).unwrap().0)
                        / (2.0 * h);
                    let an = grad[[i, k]];
                    assert!(
                        (fd - an).abs() <= 1e-5 * fd.abs().max(an.abs()).max(1e-3),
                        "{} [{i},{k}]: fd {fd} vs analytic {an}",
                        spec.name()
                    );
                }
            }
        }
    }
}
