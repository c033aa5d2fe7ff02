use ndarray::{s, Array2, ArrayView1};

use super::metric::{MetricSpec, NoiseSpace};
use super::path::Path;
use crate::error::{Error, Result};
use crate::nn::{cosine_lr, AdamWConfig, EpsModel, OptimizerState};

/// Step-size schedule over the optimizer iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Cosine annealing from the base rate down to `floor`.
    Cosine { floor: f64 },
}

/// How the path is initialized before optimization.
#[derive(Clone, Debug, PartialEq)]
pub enum PathInit {
    Slerp,
    Lerp,
    Given(Path),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicConfig {
    pub iterations: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub init: PathInit,
    pub n_segments: usize,
    /// Stop once the relative energy change of one iteration falls below this;
    /// zero runs every iteration.
    pub tolerance: f64,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr: 1e-4,
            schedule: LrSchedule::Constant,
            init: PathInit::Slerp,
            n_segments: 100,
            tolerance: 0.0,
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("geodesic iterations must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("geodesic lr = {} must be positive", self.lr)));
        }
        if self.n_segments == 0 {
            return Err(Error::InvalidArgument("a path needs at least one segment".into()));
        }
        if let LrSchedule::Cosine { floor } = self.schedule {
            if !(0.0..=self.lr).contains(&floor) {
                return Err(Error::InvalidArgument(format!("lr floor {floor} outside [0, lr]")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    fn lr_at(&self, iteration: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine { floor } => cosine_lr(iteration, self.iterations, self.lr, floor),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeodesicStatus {
    Completed,
    Converged,
    /// A non-finite energy or gradient stopped the run early.
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct GeodesicResult {
    /// Lowest-energy iterate seen.
    pub path: Path,
    /// Energy before each update, followed by the energy after the last one.
    pub energies: Vec<f64>,
    pub status: GeodesicStatus,
}

impl GeodesicResult {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn final_energy(&self) -> f64 {
        self.energies.iter().copied().filter(|e| e.is_finite()).fold(f64::INFINITY, f64::min)
    }
}

/// Minimizes the discrete path energy with endpoints pinned, by Adam on the
/// interior points.
///
/// Under the Euclidean metric the straight line is the exact minimizer and is
/// returned without iterating.
pub fn geodesic_optimize<M: EpsModel + ?Sized>(
    spec: &MetricSpec,
    space: &NoiseSpace<M>,
    x0: ArrayView1<f64>,
    x1: ArrayView1<f64>,
    cfg: &GeodesicConfig,
) -> Result<GeodesicResult> {
    cfg.validate()?;
    spec.validate()?;
    if x0.len() != x1.len() {
        return Err(Error::InvalidArgument("endpoint dimensions differ".into()));
    }
    if matches!(spec, MetricSpec::Euclidean) {
        let path = Path::lerp(space.timestep, x0, x1, cfg.n_segments)?;
        let e = spec.path_energy(space, &path)?;
        return Ok(GeodesicResult { path, energies: vec![e], status: GeodesicStatus::Completed });
    }
    let mut path = match &cfg.init {
        PathInit::Slerp => Path::slerp(space.timestep, x0, x1, cfg.n_segments)?,
        PathInit::Lerp => Path::lerp(space.timestep, x0, x1, cfg.n_segments)?,
        PathInit::Given(p) => {
            if p.start() != x0 || p.end() != x1 {
                return Err(Error::InvalidArgument("initial path endpoints do not match".into()));
            }
            Path::new(space.timestep, p.points().to_owned())?
        }
    };
    let n = path.n_segments();
    let dim = path.dim();
    if n == 1 {
        let e = spec.path_energy(space, &path)?;
        return Ok(GeodesicResult { path, energies: vec![e], status: GeodesicStatus::Completed });
    }

    let interior_len = (n - 1) * dim;
    let mut opt = OptimizerState::new(AdamWConfig::adam(), &[interior_len]);
    let mut energies = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, Array2<f64>)> = None;
    let mut status = GeodesicStatus::Completed;
    let mut previous = f64::NAN;

    for it in 0..=cfg.iterations {
        let evaluated = spec.energy_and_grad(space, path.points());
        let (energy, grad) = match evaluated {
            Ok((e, g)) if e.is_finite() && g.iter().all(|v| v.is_finite()) => (e, g),
            Ok(_) | Err(Error::NonFinite(_)) => {
                status = GeodesicStatus::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        energies.push(energy);
        if best.as_ref().map_or(true, |(b, _)| energy < *b) {
            best = Some((energy, path.points().to_owned()));
        }
        if it == cfg.iterations {
            break;
        }
        if cfg.tolerance > 0.0 && it > 0 && (previous - energy).abs() <= cfg.tolerance * previous.abs() {
            status = GeodesicStatus::Converged;
            break;
        }
        previous = energy;
        let grad = grad.slice(s![1..n, ..]).as_standard_layout().into_owned();
        let mut interior = path.points().slice(s![1..n, ..]).as_standard_layout().into_owned();
        opt.update(
            &mut [interior.as_slice_mut().expect("standard layout")],
            &[grad.as_slice().expect("standard layout")],
            cfg.lr_at(it),
        );
        path.points_mut().slice_mut(s![1..n, ..]).assign(&interior);
    }

    let (_, points) = best.ok_or(Error::NonFinite("initial path energy"))?;
    let path = Path::new(space.timestep, points)?;
    Ok(GeodesicResult { path, energies, status })
}
