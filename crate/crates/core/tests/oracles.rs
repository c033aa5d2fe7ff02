use std::f64::consts::PI;

use ndarray::{array, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use scoregeo::data::{CShapeSpec, DensityOracle};
use scoregeo::diffusion::{train, NoiseSchedule};
use scoregeo::nn::{read_checkpoint, write_checkpoint, Checkpoint, EpsModel, ScoreNet, TrainConfig};
use scoregeo::seed::rng;

fn gauss<R: Rng>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

fn scratch_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("scoregeo-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// For data `N(0, sigma^2 I)` the best noise predictor is
/// `eps*(x) = sqrt(1 - ab) x / (ab sigma^2 + 1 - ab)`, whose per-coordinate error is
/// `ab sigma^2 / (ab sigma^2 + 1 - ab)`.
fn optimal_per_coordinate_loss(schedule: &NoiseSchedule, sigma: f64) -> f64 {
    let big_t = schedule.timesteps();
    (1..=big_t)
        .map(|t| {
            let ab = schedule.alpha_bar(t);
            ab * sigma * sigma / (ab * sigma * sigma + 1.0 - ab)
        })
        .sum::<f64>()
        / big_t as f64
}

#[test]
fn training_on_gaussian_data_approaches_the_bayes_error() {
    let schedule = NoiseSchedule::default();
    let sigma = 0.5;
    let mut r = rng(3);
    let data = Array2::from_shape_simple_fn((8000, 2), || sigma * gauss(&mut r));
    let mut net = ScoreNet::new(2, 32, &mut rng(4));
    let cfg = TrainConfig { epochs: 30, batch_size: 256, seed: 5, ..Default::default() };
    train(&mut net, &schedule, &data, &cfg).unwrap();

    let n = 20_000;
    let mut total = 0.0;
    for _ in 0..n {
        let t = r.gen_range(1..=schedule.timesteps());
        let ab = schedule.alpha_bar(t);
        let x0: Array1<f64> = (0..2).map(|_| sigma * gauss(&mut r)).collect::<Vec<f64>>().into();
        let eps: Array1<f64> = (0..2).map(|_| gauss(&mut r)).collect::<Vec<f64>>().into();
        let x = &x0 * ab.sqrt() + &eps * (1.0 - ab).sqrt();
        let pred = net.eps(x.view(), schedule.t_norm(t));
        total += (&pred - &eps).mapv(|v| v * v).sum() / 2.0;
    }
    let learned = total / n as f64;
    let best = optimal_per_coordinate_loss(&schedule, sigma);
    assert!(learned > 0.95 * best, "learned {learned} below the Bayes error {best}");
    assert!(learned < 1.15 * best, "learned {learned} far above the Bayes error {best}");
}

#[test]
fn oracle_matches_a_direct_mixture_sum() {
    let spec = CShapeSpec::default();
    let oracle = DensityOracle::new(&spec, 512).unwrap();
    let ab = 0.9;
    let var = ab * spec.noise_std.powi(2) + 1.0 - ab;
    for x in [array![0.1, 0.9], array![-0.7, -0.4], array![2.0, 2.0], array![0.8, 0.0]] {
        let direct: f64 = oracle
            .nodes()
            .iter()
            .map(|n| {
                let d2 = (ab.sqrt() * n[0] - x[0]).powi(2) + (ab.sqrt() * n[1] - x[1]).powi(2);
                (-d2 / (2.0 * var)).exp() / (2.0 * PI * var)
            })
            .sum::<f64>()
            / oracle.n_nodes() as f64;
        let p = oracle.density_t(x.view(), ab).unwrap();
        assert!((p - direct).abs() <= 1e-12 * direct.max(1e-300), "{p} vs {direct}");
    }
}

#[test]
fn oracle_gradient_matches_central_differences() {
    let oracle = DensityOracle::new(&CShapeSpec::default(), 1024).unwrap();
    let ab = 0.95;
    let h = 1e-6;
    for x in [array![0.05, 1.1], array![-0.9, 0.2], array![0.3, -0.5]] {
        let (_, g) = oracle.log_density_and_grad(x.view(), ab).unwrap();
        for k in 0..2 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (oracle.log_density_t(plus.view(), ab).unwrap() - oracle.log_density_t(minus.view(), ab).unwrap())
                / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1.0), "coordinate {k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn checkpoint_file_round_trip_preserves_predictions() {
    let net = ScoreNet::new(2, 16, &mut rng(9));
    let dir = scratch_dir("ckpt");
    let path = dir.join("net.ckpt");
    let ckpt = Checkpoint { net: net.clone(), seed: 9, metadata: [("epochs".to_string(), "3".to_string())].into() };
    write_checkpoint(&path, &ckpt).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let xs = array![[0.2, -0.3], [1.0, 1.0], [-2.0, 0.5]];
    let a = net.eps_batch(xs.view(), 0.37);
    let b = back.net.eps_batch(xs.view(), 0.37);
    assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_checkpoint(&path).is_err() || read_checkpoint(&path).unwrap() != ckpt);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn batched_and_single_predictions_agree() {
    let net = ScoreNet::new(2, 24, &mut rng(12));
    let mut r = rng(13);
    let xs = Array2::from_shape_simple_fn((7, 2), || StandardNormal.sample(&mut r));
    let batch = net.eps_batch(xs.view(), 0.5);
    for (i, x) in xs.axis_iter(Axis(0)).enumerate() {
        let single = net.forward(x, 0.5).unwrap();
        for k in 0..2 {
            assert!((single[k] - batch[[i, k]]).abs() <= 1e-14);
        }
    }
}
