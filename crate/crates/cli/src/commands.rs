use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use scoregeo::data::{self, CShapeSpec, DensityOracle};
use scoregeo::diffusion::{self, NoiseSchedule};
use scoregeo::evaluation::{self, DensityConvention, ExperimentSpec, Method, PlotSeries};
use scoregeo::geometry::{GeodesicConfig, LrSchedule, PathInit};
use scoregeo::io::{read_samples, samples_to_csv, write_atomic};
use scoregeo::nn::{self, Checkpoint, ScoreNet, TrainConfig};
use scoregeo::seed::{child_seed, rng};

use crate::config::{write_manifest, Point2, Resolver};
use crate::{Cli, Command, DataArgs, EvaluateArgs, ExperimentArgs, GlobalArgs, InterpolateArgs, PlotArgs, TrainArgs};
use crate::CliError;

const DATA_PREFIX: &str = "data-";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut r = Resolver::load(cli.global.config.as_deref())?;
    match cli.command {
        Command::GenerateData(a) => generate_data(&mut r, &cli.global, a).and_then(|job| finish(r, job)),
        Command::Train(a) => train(&mut r, &cli.global, a).and_then(|job| finish(r, job)),
        Command::Interpolate(a) => interpolate(&mut r, &cli.global, a).and_then(|job| finish(r, job)),
        Command::Evaluate(a) => evaluate(&mut r, &cli.global, a).and_then(|job| finish(r, job)),
        Command::Plot(a) => plot(&mut r, &cli.global, a).and_then(|job| finish(r, job)),
    }
}

/// Work resolved from the configuration, run once the manifest is written.
struct Job {
    name: &'static str,
    out_dir: PathBuf,
    work: Box<dyn FnOnce() -> Result<(), CliError>>,
}

fn finish(r: Resolver, job: Job) -> Result<(), CliError> {
    let manifest = r.finish()?;
    write_manifest(&job.out_dir, job.name, &manifest)?;
    (job.work)()
}

fn common(r: &mut Resolver, g: &GlobalArgs) -> Result<(u64, PathBuf), CliError> {
    let seed = r.get("seed", g.seed, 0u64)?;
    let out_dir = r.path("out-dir", g.out_dir.clone(), PathBuf::from("out"))?;
    Ok((seed, out_dir))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn parse_field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    let raw = map.get(key).ok_or_else(|| CliError::Usage(format!("metadata is missing `{key}`")))?;
    raw.parse().map_err(|e| CliError::Usage(format!("metadata `{key}` = `{raw}`: {e}")))
}

fn cshape_from_kv(map: &BTreeMap<String, String>, prefix: &str) -> Result<CShapeSpec, CliError> {
    let k = |name: &str| format!("{prefix}{name}");
    Ok(CShapeSpec {
        semi_axis_x: parse_field(map, &k("semi-axis-x"))?,
        semi_axis_y: parse_field(map, &k("semi-axis-y"))?,
        wedge_half_angle_deg: parse_field(map, &k("wedge-half-angle-deg"))?,
        noise_std: parse_field(map, &k("noise-std"))?,
        n_samples: parse_field(map, &k("samples"))?,
        seed: parse_field(map, &k("seed"))?,
    })
}

fn generate_data(r: &mut Resolver, g: &GlobalArgs, a: DataArgs) -> Result<Job, CliError> {
    let (seed, out_dir) = common(r, g)?;
    let defaults = CShapeSpec::default();
    let output = r.path("output", a.output, out_dir.join("data.csv"))?;
    let spec = CShapeSpec {
        n_samples: r.get("samples", a.samples, defaults.n_samples)?,
        semi_axis_x: r.get("semi-axis-x", a.semi_axis_x, defaults.semi_axis_x)?,
        semi_axis_y: r.get("semi-axis-y", a.semi_axis_y, defaults.semi_axis_y)?,
        wedge_half_angle_deg: r.get("wedge-half-angle-deg", a.wedge_half_angle_deg, defaults.wedge_half_angle_deg)?,
        noise_std: r.get("noise-std", a.noise_std, defaults.noise_std)?,
        seed: child_seed(seed, "data", 0),
    };
    if spec.n_samples == 0 {
        return Err(CliError::Usage("samples must be at least 1".into()));
    }
    spec.validate()?;
    Ok(Job {
        name: "generate-data",
        out_dir,
        work: Box::new(move || {
            let xs = data::sample(&spec, spec.n_samples)?;
            ensure_parent(&output)?;
            write_atomic(&output, samples_to_csv(&xs).as_bytes())?;
            write_atomic(&sidecar(&output), scoregeo::io::format_kv(&spec.to_kv()).as_bytes())?;
            println!("wrote {} samples to {}", xs.nrows(), output.display());
            Ok(())
        }),
    })
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<(Array2<f64>, CShapeSpec), CliError> {
    let xs = read_samples(path).map_err(|e| CliError::Usage(format!("dataset {}: {e}", path.display())))?;
    let meta_path = sidecar(path);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| CliError::Usage(format!("dataset metadata {}: {e}", meta_path.display())))?;
    let spec = cshape_from_kv(&scoregeo::io::parse_kv(&text)?, "")?;
    Ok((xs, spec))
}

fn train(r: &mut Resolver, g: &GlobalArgs, a: TrainArgs) -> Result<Job, CliError> {
    let (seed, out_dir) = common(r, g)?;
    let dataset = r.path("dataset", a.dataset, out_dir.join("data.csv"))?;
    let checkpoint = r.path("checkpoint", a.checkpoint, out_dir.join("model.ckpt"))?;
    let hidden = r.get("hidden", a.hidden, 512usize)?;
    let layers = r.get("layers", a.layers, 3usize)?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: r.get("epochs", a.epochs, d.epochs)?,
        batch_size: r.get("batch-size", a.batch_size, d.batch_size)?,
        lr_init: r.get("lr-init", a.lr_init, d.lr_init)?,
        lr_final: r.get("lr-final", a.lr_final, d.lr_final)?,
        clip_norm: r.get("clip-norm", a.clip_norm, d.clip_norm)?,
        weight_decay: r.get("weight-decay", a.weight_decay, d.weight_decay)?,
        seed: child_seed(seed, "train", 0),
    };
    let timesteps = r.get("timesteps", a.timesteps, 1000usize)?;
    let beta_start = r.get("beta-start", a.beta_start, 1e-4)?;
    let beta_end = r.get("beta-end", a.beta_end, 0.02)?;
    cfg.validate()?;
    if hidden == 0 || layers < 2 {
        return Err(CliError::Usage("need hidden >= 1 and layers >= 2".into()));
    }
    let schedule = NoiseSchedule::linear(timesteps, beta_start, beta_end)?;
    Ok(Job {
        name: "train",
        out_dir: out_dir.clone(),
        work: Box::new(move || {
            let (xs, data_spec) = read_dataset(&dataset)?;
            let mut net = ScoreNet::with_layers(xs.ncols(), hidden, layers, &mut rng(child_seed(seed, "init", 0)));
            let history = diffusion::train(&mut net, &schedule, &xs, &cfg)?;
            let mut metadata = schedule.to_kv();
            for (k, v) in data_spec.to_kv() {
                metadata.insert(format!("{DATA_PREFIX}{k}"), v);
            }
            metadata.insert("epochs".into(), cfg.epochs.to_string());
            metadata.insert("batch-size".into(), cfg.batch_size.to_string());
            ensure_parent(&checkpoint)?;
            nn::write_checkpoint(&checkpoint, &Checkpoint { net, seed, metadata })?;
            let batches = xs.nrows().div_ceil(cfg.batch_size);
            let mut csv = String::from("step,epoch,loss\n");
            for (i, l) in history.step_losses.iter().enumerate() {
                csv.push_str(&format!("{i},{},{l}\n", i / batches));
            }
            write_atomic(&out_dir.join("loss_history.csv"), csv.as_bytes())?;
            println!(
                "trained {} steps; final epoch loss {:.6}; checkpoint {}",
                history.step_losses.len(),
                history.epoch_losses.last().copied().unwrap_or(f64::NAN),
                checkpoint.display()
            );
            Ok(())
        }),
    })
}

/// Loads a checkpoint together with the schedule and data spec it was trained with.
fn load_model(path: &Path) -> Result<(ScoreNet, NoiseSchedule, CShapeSpec), CliError> {
    let ckpt = nn::read_checkpoint(path).map_err(|e| CliError::Usage(format!("checkpoint {}: {e}", path.display())))?;
    let m = &ckpt.metadata;
    let schedule =
        NoiseSchedule::linear(parse_field(m, "timesteps")?, parse_field(m, "beta-start")?, parse_field(m, "beta-end")?)?;
    let spec = cshape_from_kv(m, DATA_PREFIX)?;
    Ok((ckpt.net, schedule, spec))
}

fn experiment_spec(r: &mut Resolver, seed: u64, a: ExperimentArgs) -> Result<ExperimentSpec, CliError> {
    let d = ExperimentSpec::default();
    let gd = GeodesicConfig::default();
    let density = match r.get("density-convention", a.density_convention, "tau".to_string())?.as_str() {
        "tau" => DensityConvention::InterpolationTimestep,
        "clean" => DensityConvention::Clean,
        other => return Err(CliError::Usage(format!("density convention `{other}` (expected tau or clean)"))),
    };
    let init = match r.get("geodesic-init", a.geodesic.geodesic_init, "slerp".to_string())?.as_str() {
        "slerp" => PathInit::Slerp,
        "lerp" => PathInit::Lerp,
        other => return Err(CliError::Usage(format!("geodesic init `{other}` (expected slerp or lerp)"))),
    };
    let schedule = match r.get_opt::<f64>("geodesic-lr-floor", a.geodesic.geodesic_lr_floor)? {
        Some(floor) => LrSchedule::Cosine { floor },
        None => LrSchedule::Constant,
    };
    let n_segments = r.get("segments", a.segments, d.n_segments)?;
    let spec = ExperimentSpec {
        tau_fraction: r.get("tau-fraction", a.tau_fraction, d.tau_fraction)?,
        n_segments,
        seed: child_seed(seed, "evaluate", 0),
        density,
        reference_samples: r.get("reference-samples", a.reference_samples, d.reference_samples)?,
        geodesic: GeodesicConfig {
            iterations: r.get("geodesic-iterations", a.geodesic.geodesic_iterations, gd.iterations)?,
            lr: r.get("geodesic-lr", a.geodesic.geodesic_lr, gd.lr)?,
            schedule,
            init,
            n_segments,
            tolerance: r.get("geodesic-tolerance", a.geodesic.geodesic_tolerance, gd.tolerance)?,
        },
        ..d
    };
    Ok(spec)
}

fn parse_point(s: Option<String>, what: &str) -> Result<Option<Point2>, CliError> {
    s.map(|v| v.parse::<Point2>().map_err(|e| CliError::Usage(format!("--{what}: {e}")))).transpose()
}

fn interpolate(r: &mut Resolver, g: &GlobalArgs, a: InterpolateArgs) -> Result<Job, CliError> {
    let (seed, out_dir) = common(r, g)?;
    let checkpoint = r.path("checkpoint", a.checkpoint, out_dir.join("model.ckpt"))?;
    let from = r.get("from", parse_point(a.from, "from")?, Point2([0.0, 1.15]))?;
    let to = r.get("to", parse_point(a.to, "to")?, Point2([-0.8, -0.6]))?;
    let method: Method = r.get("method", a.method, "jacobian".to_string())?.parse()?;
    let output = r.path("output", a.output, out_dir.join(format!("path_{}.csv", method.name().replace(':', "_"))))?;
    let svg = r.get_opt("svg", a.svg.map(|p| p.to_string_lossy().into_owned()))?.map(PathBuf::from);
    let spec = experiment_spec(r, seed, a.experiment)?;
    spec.validate()?;
    Ok(Job {
        name: "interpolate",
        out_dir,
        work: Box::new(move || {
            let (net, schedule, data_spec) = load_model(&checkpoint)?;
            let oracle = Arc::new(DensityOracle::with_default_nodes(&data_spec)?);
            let x0 = ndarray::arr1(&from.0);
            let x1 = ndarray::arr1(&to.0);
            let (cell, record) =
                evaluation::interpolate_samples(&net, &schedule, &oracle, x0.view(), x1.view(), method, &spec)?;
            ensure_parent(&output)?;
            write_atomic(&output, record.to_csv(spec.seed).as_bytes())?;
            if let Some(svg) = svg {
                let samples = data::sample(&CShapeSpec { seed: data_spec.seed, ..data_spec.clone() }, 5000)?;
                let doc = evaluation::render_svg(
                    samples.view(),
                    &[PlotSeries { label: method.name(), points: record.decoded.clone() }],
                    &[profile_series(&method.name(), record.profile.normalized.as_slice().expect("contiguous"))],
                );
                ensure_parent(&svg)?;
                write_atomic(&svg, doc.as_bytes())?;
            }
            println!(
                "{}: density std {:.6} (raw {:.6}), energy {:.6}, length {:.6}; wrote {}",
                cell.method,
                cell.std,
                cell.raw_std,
                cell.energy,
                cell.length,
                output.display()
            );
            Ok(())
        }),
    })
}

fn profile_series(label: &str, values: &[f64]) -> PlotSeries {
    let n = values.len().saturating_sub(1).max(1) as f64;
    let points = Array2::from_shape_fn((values.len(), 2), |(i, k)| if k == 0 { i as f64 / n } else { values[i] });
    PlotSeries { label: label.to_string(), points }
}

fn evaluate(r: &mut Resolver, g: &GlobalArgs, a: EvaluateArgs) -> Result<Job, CliError> {
    let (seed, out_dir) = common(r, g)?;
    let checkpoint = r.path("checkpoint", a.checkpoint, out_dir.join("model.ckpt"))?;
    let dataset = r.path("dataset", a.dataset, out_dir.join("data.csv"))?;
    let d = ExperimentSpec::default();
    let n_pairs = r.get("pairs", a.pairs, d.n_pairs)?;
    let default_methods: Vec<String> = d.methods.iter().map(Method::name).collect();
    let methods = r
        .get("methods", a.methods, default_methods.join(","))?
        .split(',')
        .map(str::parse)
        .collect::<Result<Vec<Method>, _>>()?;
    let min_separation_deg = r.get("min-separation-deg", a.min_separation_deg, d.min_separation_deg)?;
    let spec = ExperimentSpec { n_pairs, methods, min_separation_deg, ..experiment_spec(r, seed, a.experiment)? };
    spec.validate()?;
    Ok(Job {
        name: "evaluate",
        out_dir: out_dir.clone(),
        work: Box::new(move || {
            let (net, schedule, data_spec) = load_model(&checkpoint)?;
            let (xs, _) = read_dataset(&dataset)?;
            let oracle = Arc::new(DensityOracle::with_default_nodes(&data_spec)?);
            let report = evaluation::run_experiment(&net, &schedule, &oracle, xs.view(), &spec)?;
            write_atomic(&out_dir.join("report.csv"), report.report_csv().as_bytes())?;
            write_atomic(&out_dir.join("summary.csv"), report.summary_csv().as_bytes())?;
            let paths_dir = out_dir.join("paths");
            std::fs::create_dir_all(&paths_dir)?;
            for rec in &report.paths {
                let name = format!("pair{:03}_{}.csv", rec.pair, rec.method.replace(':', "_"));
                write_atomic(&paths_dir.join(name), rec.to_csv(spec.seed).as_bytes())?;
            }
            print!("{}", report.summary_csv());
            if report.all_valid() {
                Ok(())
            } else {
                let bad: Vec<String> = report
                    .cells
                    .iter()
                    .filter(|c| !c.is_valid())
                    .map(|c| format!("pair {} {}: {}", c.pair, c.method, c.error.as_deref().unwrap_or("")))
                    .collect();
                Err(CliError::Numerical(format!("{} invalid cells:\n  {}", bad.len(), bad.join("\n  "))))
            }
        }),
    })
}

/// Decoded points and normalized profile of a path CSV written by this tool.
fn read_path_csv(path: &Path) -> Result<(String, Array2<f64>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let (decoded, meta) = scoregeo::geometry::Path::from_csv(&text)?;
    let header = text.lines().nth(1).unwrap_or_default();
    let col = header.split(',').position(|c| c == "density_normalized");
    let profile = match col {
        Some(c) => text
            .lines()
            .skip(2)
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').nth(c).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN))
            .collect(),
        None => Vec::new(),
    };
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(meta.method);
    Ok((name, decoded.into_points(), profile))
}

fn plot(r: &mut Resolver, g: &GlobalArgs, a: PlotArgs) -> Result<Job, CliError> {
    let (_, out_dir) = common(r, g)?;
    let dataset = r.path("dataset", a.dataset, out_dir.join("data.csv"))?;
    let paths = r.get_opt("paths", a.paths)?;
    let output = r.path("output", a.output, out_dir.join("figure.svg"))?;
    Ok(Job {
        name: "plot",
        out_dir: out_dir.clone(),
        work: Box::new(move || {
            let files: Vec<PathBuf> = match paths {
                Some(list) => list.split(',').map(|s| PathBuf::from(s.trim())).collect(),
                None => {
                    let dir = out_dir.join("paths");
                    let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
                        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("pair000_")))
                        .collect();
                    found.sort();
                    found
                }
            };
            let samples = read_samples(&dataset).map_err(|e| CliError::Usage(format!("{}: {e}", dataset.display())))?;
            let mut series = Vec::new();
            let mut profiles = Vec::new();
            for f in &files {
                let (name, points, profile) = read_path_csv(f)?;
                if !profile.is_empty() {
                    profiles.push(profile_series(&name, &profile));
                }
                series.push(PlotSeries { label: name, points });
            }
            let doc = evaluation::render_svg(samples.view(), &series, &profiles);
            ensure_parent(&output)?;
            write_atomic(&output, doc.as_bytes())?;
            println!("wrote {} ({} paths)", output.display(), series.len());
            Ok(())
        }),
    })
}
