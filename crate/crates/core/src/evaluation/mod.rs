//! The interpolation benchmark: endpoint pairs drawn from the data, every method
//! applied in the noise space, paths decoded to data space and scored by the
//! spread of the data density along them.

mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::data::{self, DensityOracle};
use crate::diffusion::{ddim_invert_batch, ddim_reverse_batch, NoiseSchedule};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_optimize, ConformalDensity, GeodesicConfig, MetricSpec, NoiseSpace, Path, PathMeta};
use crate::nn::EpsModel;
use crate::seed;

pub use plot::{render_svg, PlotSeries};

/// Interpolation method compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Lerp,
    Slerp,
    /// Geodesic of the density-weighted conformal metric.
    Density,
    /// Geodesic of the score-Jacobian metric.
    Jacobian,
    JacobianRegularized { lambda: f64 },
    /// Geodesic of the flat metric; coincides with `Lerp`.
    Euclidean,
}

impl Method {
    pub const DEFAULT_SET: [Method; 4] = [Method::Lerp, Method::Slerp, Method::Density, Method::Jacobian];

    pub fn name(&self) -> String {
        match self {
            Method::Lerp => "lerp".into(),
            Method::Slerp => "slerp".into(),
            Method::Density => "density".into(),
            Method::Jacobian => "jacobian".into(),
            Method::JacobianRegularized { lambda } => format!("jacobian-reg:{lambda}"),
            Method::Euclidean => "euclidean".into(),
        }
    }

    fn metric(&self, oracle: &Arc<DensityOracle>) -> Option<MetricSpec> {
        match *self {
            Method::Lerp | Method::Slerp => None,
            Method::Density => Some(MetricSpec::ConformalDensity(ConformalDensity::new(oracle.clone(), 2))),
            Method::Jacobian => Some(MetricSpec::Jacobian),
            Method::JacobianRegularized { lambda } => Some(MetricSpec::JacobianRegularized { lambda }),
            Method::Euclidean => Some(MetricSpec::Euclidean),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lerp" => Ok(Method::Lerp),
            "slerp" => Ok(Method::Slerp),
            "density" => Ok(Method::Density),
            "jacobian" | "ours" => Ok(Method::Jacobian),
            "euclidean" => Ok(Method::Euclidean),
            other => match other.strip_prefix("jacobian-reg:") {
                Some(l) => {
                    let lambda = l
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad lambda in `{other}`: {e}")))?;
                    Ok(Method::JacobianRegularized { lambda })
                }
                None => Err(Error::InvalidArgument(format!(
                    "unknown method `{other}` (expected lerp, slerp, density, jacobian, jacobian-reg:<lambda>, euclidean)"
                ))),
            },
        }
    }
}

/// Which marginal the decoded points are scored under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityConvention {
    /// The data density itself (`alpha_bar = 1`).
    Clean,
    /// The marginal at the interpolation timestep.
    InterpolationTimestep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub n_pairs: usize,
    pub tau_fraction: f64,
    pub n_segments: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Minimum separation of the endpoints' arc angles, in degrees.
    pub min_separation_deg: f64,
    pub density: DensityConvention,
    /// Samples drawn to find the normalizing maximum density.
    pub reference_samples: usize,
    pub geodesic: GeodesicConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_pairs: 50,
            tau_fraction: 0.02,
            n_segments: 100,
            methods: Method::DEFAULT_SET.to_vec(),
            seed: 0,
            min_separation_deg: 60.0,
            density: DensityConvention::InterpolationTimestep,
            reference_samples: 100_000,
            geodesic: GeodesicConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::InvalidArgument("need at least one pair".into()));
        }
        if !(self.tau_fraction > 0.0 && self.tau_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("timestep fraction {} outside (0, 1]", self.tau_fraction)));
        }
        if self.n_segments == 0 {
            return Err(Error::InvalidArgument("need at least one segment".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if !(0.0..360.0).contains(&self.min_separation_deg) {
            return Err(Error::InvalidArgument("minimum separation must lie in [0, 360) degrees".into()));
        }
        if self.reference_samples == 0 {
            return Err(Error::InvalidArgument("need at least one reference sample".into()));
        }
        self.geodesic.validate()
    }

    pub fn timestep(&self, schedule: &NoiseSchedule) -> usize {
        schedule.timestep_at(self.tau_fraction).max(1)
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let methods: Vec<String> = self.methods.iter().map(Method::name).collect();
        let density = match self.density {
            DensityConvention::Clean => "clean",
            DensityConvention::InterpolationTimestep => "tau",
        };
        [
            ("pairs", self.n_pairs.to_string()),
            ("tau-fraction", self.tau_fraction.to_string()),
            ("segments", self.n_segments.to_string()),
            ("methods", methods.join(",")),
            ("seed", self.seed.to_string()),
            ("min-separation-deg", self.min_separation_deg.to_string()),
            ("density-convention", density.to_string()),
            ("reference-samples", self.reference_samples.to_string()),
            ("geodesic-iterations", self.geodesic.iterations.to_string()),
            ("geodesic-lr", self.geodesic.lr.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Density values along a decoded path.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    pub raw: Array1<f64>,
    /// `raw` divided by the reference maximum.
    pub normalized: Array1<f64>,
}

pub fn density_profile(
    decoded: &Array2<f64>,
    oracle: &DensityOracle,
    alpha_bar: f64,
    reference_max: f64,
) -> Result<DensityProfile> {
    if !(reference_max > 0.0 && reference_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("reference maximum {reference_max} must be positive")));
    }
    let raw = oracle.density_rows(decoded, alpha_bar)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density profile"));
    }
    let normalized = &raw / reference_max;
    Ok(DensityProfile { raw, normalized })
}

/// Largest density over `n` fresh samples of the oracle's distribution.
pub fn reference_max_density(oracle: &DensityOracle, n: usize, seed: u64, alpha_bar: f64) -> Result<f64> {
    let spec = data::CShapeSpec { seed, ..oracle.spec().clone() };
    let xs = data::sample(&spec, n)?;
    let d = oracle.density_rows(&xs, alpha_bar)?;
    Ok(d.fold(0.0, |m: f64, &v| m.max(v)))
}

/// Population standard deviation, by Welford's update.
pub fn std_of_profile(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("std needs at least 2 values".into()));
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    Ok((m2 / values.len() as f64).sqrt())
}

/// One (pair, method) result.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub method: String,
    pub pair: usize,
    /// Std of the normalized density profile.
    pub std: f64,
    pub raw_std: f64,
    /// Score-Jacobian energy of the noise-space path.
    pub energy: f64,
    /// Euclidean length of the noise-space path.
    pub length: f64,
    pub error: Option<String>,
}

impl Cell {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

/// Paths of one (pair, method) cell, kept for plotting.
#[derive(Clone, Debug)]
pub struct PathRecord {
    pub method: String,
    pub pair: usize,
    pub noise: Path,
    pub decoded: Array2<f64>,
    pub profile: DensityProfile,
}

impl PathRecord {
    /// Decoded points, noise-space points and density profile as one CSV.
    pub fn to_csv(&self, seed: u64) -> String {
        let decoded = Path::new(self.noise.timestep(), self.decoded.clone()).expect("decoded paths are finite");
        let meta = PathMeta { method: self.method.clone(), seed };
        let noise = self.noise.points();
        let (n0, n1) = (noise.column(0).to_vec(), noise.column(1).to_vec());
        decoded.to_csv(
            &meta,
            &[
                ("noise_x0", &n0),
                ("noise_x1", &n1),
                ("density", self.profile.raw.as_slice().expect("contiguous")),
                ("density_normalized", self.profile.normalized.as_slice().expect("contiguous")),
            ],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub mean_std: f64,
    pub mean_raw_std: f64,
    pub mean_energy: f64,
    pub mean_length: f64,
    pub n_valid: usize,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub timestep: usize,
    pub density_alpha_bar: f64,
    pub reference_max: f64,
    pub pairs: Vec<(Array1<f64>, Array1<f64>)>,
    pub cells: Vec<Cell>,
    pub paths: Vec<PathRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    /// Pairs with every method valid.
    pub fn valid_pairs(&self) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&p| self.cells.iter().filter(|c| c.pair == p).all(Cell::is_valid))
            .collect()
    }

    pub fn all_valid(&self) -> bool {
        self.cells.iter().all(Cell::is_valid)
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.method) {
                out.push(c.method.clone());
            }
        }
        out
    }

    /// Per-method means over the pairs valid for every method.
    pub fn summary(&self) -> Vec<MethodSummary> {
        let valid = self.valid_pairs();
        self.methods()
            .into_iter()
            .map(|m| {
                let cells: Vec<&Cell> =
                    self.cells.iter().filter(|c| c.method == m && valid.contains(&c.pair)).collect();
                let mean = |f: fn(&Cell) -> f64| {
                    if cells.is_empty() {
                        f64::NAN
                    } else {
                        cells.iter().map(|c| f(c)).sum::<f64>() / cells.len() as f64
                    }
                };
                MethodSummary {
                    mean_std: mean(|c| c.std),
                    mean_raw_std: mean(|c| c.raw_std),
                    mean_energy: mean(|c| c.energy),
                    mean_length: mean(|c| c.length),
                    n_valid: cells.len(),
                    method: m,
                }
            })
            .collect()
    }

    pub fn method_summary(&self, method: &str) -> Option<MethodSummary> {
        self.summary().into_iter().find(|s| s.method == method)
    }

    /// `method,pair,std,raw_std,energy,length,valid`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("method,pair,std,raw_std,energy,length,valid\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.method,
                c.pair,
                c.std,
                c.raw_std,
                c.energy,
                c.length,
                c.is_valid()
            );
        }
        out
    }

    /// `method,mean_std,mean_raw_std,mean_energy,mean_length,n_valid`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,mean_std,mean_raw_std,mean_energy,mean_length,n_valid\n");
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.method, s.mean_std, s.mean_raw_std, s.mean_energy, s.mean_length, s.n_valid
            );
        }
        out
    }
}

/// Picks `n` index pairs whose arc angles differ by at least `min_sep` radians.
fn choose_pairs(
    dataset: ArrayView2<f64>,
    oracle: &DensityOracle,
    n: usize,
    min_sep: f64,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let rows = dataset.nrows();
    if rows < 2 {
        return Err(Error::InvalidArgument("need at least two dataset points".into()));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(n);
    let max_tries = 1000 * n.max(1);
    for _ in 0..max_tries {
        if out.len() == n {
            break;
        }
        let a = rng.gen_range(0..rows);
        let b = rng.gen_range(0..rows);
        let phi_a = oracle.spec().angle_of(dataset.row(a));
        let phi_b = oracle.spec().angle_of(dataset.row(b));
        if a != b && (phi_a - phi_b).abs() >= min_sep {
            out.push((a, b));
        }
    }
    if out.len() < n {
        return Err(Error::InvalidArgument(format!(
            "found only {} of {n} pairs with the requested separation",
            out.len()
        )));
    }
    Ok(out)
}

/// Builds the noise-space path of one method between inverted endpoints.
pub fn interpolate<M: EpsModel + ?Sized>(
    method: Method,
    space: &NoiseSpace<M>,
    oracle: &Arc<DensityOracle>,
    z0: ArrayView1<f64>,
    z1: ArrayView1<f64>,
    n_segments: usize,
    geodesic: &GeodesicConfig,
) -> Result<Path> {
    match method {
        Method::Lerp => Path::lerp(space.timestep, z0, z1, n_segments),
        Method::Slerp => Path::slerp(space.timestep, z0, z1, n_segments),
        _ => {
            let metric = method.metric(oracle).expect("geodesic methods have a metric");
            let cfg = GeodesicConfig { n_segments, ..geodesic.clone() };
            Ok(geodesic_optimize(&metric, space, z0, z1, &cfg)?.path)
        }
    }
}

struct CellContext<'a, M: EpsModel + ?Sized> {
    space: NoiseSpace<'a, M>,
    oracle: &'a Arc<DensityOracle>,
    spec: &'a ExperimentSpec,
    density_alpha_bar: f64,
    reference_max: f64,
}

fn evaluate_cell<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    ctx: &CellContext<M>,
    z0: ArrayView1<f64>,
    z1: ArrayView1<f64>,
    method: Method,
    pair: usize,
) -> Result<(Cell, PathRecord)> {
    let (space, spec, tau) = (&ctx.space, ctx.spec, ctx.space.timestep);
    let noise = interpolate(method, space, ctx.oracle, z0, z1, spec.n_segments, &spec.geodesic)?;
    let decoded = ddim_reverse_batch(model, schedule, noise.points(), tau, tau)?;
    let profile = density_profile(&decoded, ctx.oracle, ctx.density_alpha_bar, ctx.reference_max)?;
    let cell = Cell {
        method: method.name(),
        pair,
        std: std_of_profile(profile.normalized.as_slice().expect("contiguous"))?,
        raw_std: std_of_profile(profile.raw.as_slice().expect("contiguous"))?,
        energy: MetricSpec::Jacobian.path_energy(space, &noise)?,
        length: MetricSpec::Euclidean.path_length(space, &noise)?,
        error: None,
    };
    if !(cell.std.is_finite() && cell.energy.is_finite() && cell.length.is_finite()) {
        return Err(Error::NonFinite("cell statistics"));
    }
    Ok((cell, PathRecord { method: method.name(), pair, noise, decoded, profile }))
}

fn density_alpha_bar(spec: &ExperimentSpec, schedule: &NoiseSchedule, tau: usize) -> f64 {
    match spec.density {
        DensityConvention::Clean => 1.0,
        DensityConvention::InterpolationTimestep => schedule.alpha_bar(tau),
    }
}

/// Interpolates between two clean samples with one method: invert both to the
/// interpolation timestep, build the path there, decode every point.
/// `spec.n_pairs`, `spec.methods` and the pair-selection fields are ignored.
pub fn interpolate_samples<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    oracle: &Arc<DensityOracle>,
    x0: ArrayView1<f64>,
    x1: ArrayView1<f64>,
    method: Method,
    spec: &ExperimentSpec,
) -> Result<(Cell, PathRecord)> {
    spec.validate()?;
    let tau = spec.timestep(schedule);
    let space = NoiseSpace::new(model, schedule, tau)?;
    let alpha = density_alpha_bar(spec, schedule, tau);
    let reference_max =
        reference_max_density(oracle, spec.reference_samples, seed::child_seed(spec.seed, "reference", 0), alpha)?;
    let endpoints = ndarray::stack![ndarray::Axis(0), x0, x1];
    let z = ddim_invert_batch(model, schedule, endpoints.view(), tau, tau)?;
    let ctx = CellContext { space, oracle, spec, density_alpha_bar: alpha, reference_max };
    evaluate_cell(model, schedule, &ctx, z.row(0), z.row(1), method, 0)
}

/// Runs every method on every pair. Failed cells are recorded, not propagated;
/// aggregates exclude any pair with a failed cell.
pub fn run_experiment<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    oracle: &Arc<DensityOracle>,
    dataset: ArrayView2<f64>,
    spec: &ExperimentSpec,
) -> Result<EvalReport> {
    spec.validate()?;
    let tau = spec.timestep(schedule);
    let space = NoiseSpace::new(model, schedule, tau)?;
    let density_alpha_bar = density_alpha_bar(spec, schedule, tau);
    let reference_max = reference_max_density(
        oracle,
        spec.reference_samples,
        seed::child_seed(spec.seed, "reference", 0),
        density_alpha_bar,
    )?;
    let index_pairs = choose_pairs(
        dataset,
        oracle,
        spec.n_pairs,
        spec.min_separation_deg.to_radians(),
        seed::child_seed(spec.seed, "pairs", 0),
    )?;

    let mut endpoints = Array2::zeros((2 * spec.n_pairs, dataset.ncols()));
    for (p, &(a, b)) in index_pairs.iter().enumerate() {
        endpoints.row_mut(2 * p).assign(&dataset.row(a));
        endpoints.row_mut(2 * p + 1).assign(&dataset.row(b));
    }
    let inverted = ddim_invert_batch(model, schedule, endpoints.view(), tau, tau)?;

    let ctx = CellContext { space, oracle, spec, density_alpha_bar, reference_max };
    let mut cells = Vec::new();
    let mut paths = Vec::new();
    for p in 0..spec.n_pairs {
        let (z0, z1) = (inverted.row(2 * p), inverted.row(2 * p + 1));
        for &method in &spec.methods {
            let outcome = evaluate_cell(model, schedule, &ctx, z0, z1, method, p);
            match outcome {
                Ok((cell, record)) => {
                    cells.push(cell);
                    paths.push(record);
                }
                Err(e) => cells.push(Cell {
                    method: method.name(),
                    pair: p,
                    std: f64::NAN,
                    raw_std: f64::NAN,
                    energy: f64::NAN,
                    length: f64::NAN,
                    error: Some(e.to_string()),
                }),
            }
        }
    }

    let mut metadata = spec.to_kv();
    metadata.insert("tau".into(), tau.to_string());
    metadata.insert("density-alpha-bar".into(), density_alpha_bar.to_string());
    metadata.insert("reference-max".into(), reference_max.to_string());
    let pairs = index_pairs
        .iter()
        .map(|&(a, b)| (dataset.row(a).to_owned(), dataset.row(b).to_owned()))
        .collect();
    Ok(EvalReport { timestep: tau, density_alpha_bar, reference_max, pairs, cells, paths, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CShapeSpec;
    use crate::nn::LinearEps;
    use ndarray::{array, Axis};

    fn two_pass_std(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn std_cases() {
        assert_eq!(std_of_profile(&[3.0; 7]).unwrap(), 0.0);
        assert!((std_of_profile(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(std_of_profile(&[1.0]).is_err());
        let v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e6).collect();
        assert!((std_of_profile(&v).unwrap() - two_pass_std(&v)).abs() < 1e-12 * two_pass_std(&v).max(1.0));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Lerp,
            Method::Slerp,
            Method::Density,
            Method::Jacobian,
            Method::JacobianRegularized { lambda: 0.5 },
            Method::Euclidean,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("spline".parse::<Method>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec::default().validate().is_ok());
        assert!(ExperimentSpec { n_pairs: 0, ..Default::default() }.validate().is_err());
        assert!(ExperimentSpec { tau_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(ExperimentSpec { tau_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(ExperimentSpec { methods: vec![], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_profile_for_constant_path() {
        let oracle = DensityOracle::new(&CShapeSpec::default(), 512).unwrap();
        let x = CShapeSpec::default().point(2.0);
        let decoded = Array2::from_shape_fn((9, 2), |(_, k)| x[k]);
        let prof = density_profile(&decoded, &oracle, 0.99, 1.0).unwrap();
        assert!(prof.raw.iter().all(|&v| v == prof.raw[0]));
        assert_eq!(std_of_profile(prof.normalized.as_slice().unwrap()).unwrap(), 0.0);
    }

    fn small_spec(methods: Vec<Method>) -> ExperimentSpec {
        ExperimentSpec {
            n_pairs: 3,
            n_segments: 8,
            methods,
            reference_samples: 500,
            geodesic: GeodesicConfig { iterations: 5, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn small_experiment_runs_and_aggregates() {
        let schedule = NoiseSchedule::default();
        let model = LinearEps { dim: 2, scale: 0.1 };
        let spec = CShapeSpec { seed: 4, ..Default::default() };
        let oracle = Arc::new(DensityOracle::new(&spec, 512).unwrap());
        let data = data::sample(&spec, 200).unwrap();
        let mut methods = Method::DEFAULT_SET.to_vec();
        methods.push(Method::Euclidean);
        let report = run_experiment(&model, &schedule, &oracle, data.view(), &small_spec(methods)).unwrap();
        assert!(report.all_valid(), "{:?}", report.cells);
        assert_eq!(report.cells.len(), 15);
        for (a, b) in &report.pairs {
            let gap = (spec.angle_of(a.view()) - spec.angle_of(b.view())).abs();
            assert!(gap >= 60f64.to_radians());
        }
        let lerp = report.method_summary("lerp").unwrap();
        let euclid = report.method_summary("euclidean").unwrap();
        assert_eq!(lerp.mean_std, euclid.mean_std);
        assert_eq!(lerp.mean_energy, euclid.mean_energy);
        for s in report.summary() {
            let cells: Vec<f64> = report.cells.iter().filter(|c| c.method == s.method).map(|c| c.std).collect();
            assert!((s.mean_std - cells.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        }
        for p in 0..3 {
            let lerp_len = report.cells.iter().find(|c| c.pair == p && c.method == "lerp").unwrap().length;
            for c in report.cells.iter().filter(|c| c.pair == p) {
                assert!(lerp_len <= c.length * (1.0 + 1e-12));
            }
        }
        let csv = report.report_csv();
        assert_eq!(csv.lines().count(), 16);
        assert_eq!(report.summary_csv().lines().count(), 6);
        let again = run_experiment(&model, &schedule, &oracle, data.view(), &small_spec(report_methods(&report)))
            .unwrap();
        assert_eq!(again.report_csv(), csv);
    }

    fn report_methods(report: &EvalReport) -> Vec<Method> {
        report.methods().iter().map(|m| m.parse().unwrap()).collect()
    }

    #[test]
    fn degenerate_pair_has_zero_spread() {
        let schedule = NoiseSchedule::default();
        let model = LinearEps { dim: 2, scale: 0.1 };
        let spec = CShapeSpec::default();
        let oracle = Arc::new(DensityOracle::new(&spec, 512).unwrap());
        let x = array![spec.point(2.0)[0], spec.point(2.0)[1]];
        let space = NoiseSpace::new(&model, &schedule, 20).unwrap();
        let z = ddim_invert_batch(&model, &schedule, x.view().insert_axis(Axis(0)), 20, 20).unwrap();
        for m in Method::DEFAULT_SET {
            let path = interpolate(m, &space, &oracle, z.row(0), z.row(0), 8, &GeodesicConfig::default()).unwrap();
            let decoded = ddim_reverse_batch(&model, &schedule, path.points(), 20, 20).unwrap();
            let prof = density_profile(&decoded, &oracle, schedule.alpha_bar(20), 1.0).unwrap();
            assert_eq!(std_of_profile(prof.raw.as_slice().unwrap()).unwrap(), 0.0, "{}", m.name());
        }
    }
}
