//! Noise schedule, forward corruption, DDPM/DDIM reverse steps, deterministic
//! DDIM inversion and the noise-prediction training loop.
//!
//! Timesteps are integers `0..=T`; `alpha_bar(0) = 1` denotes clean data. The
//! network is queried with the normalized time `t / T` and never at `t = 0`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{cosine_lr, train_step, AdamWConfig, EpsModel, OptimizerState, ScoreNet, TrainBatch, TrainConfig};
use crate::seed;

/// Discrete variance schedule with cumulative products `alpha_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    /// `betas[t]` for `t = 1..=T`; `betas[0] = 0`.
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub const DEFAULT_TIMESTEPS: usize = 1000;
    pub const DEFAULT_BETA_START: f64 = 1e-4;
    pub const DEFAULT_BETA_END: f64 = 0.02;

    /// Betas spaced linearly from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one timestep".into()));
        }
        let betas: Vec<f64> = if timesteps == 1 {
            vec![beta_start]
        } else {
            (0..timesteps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64)
                .collect()
        };
        Self::from_betas(&betas)
    }

    /// Builds a schedule from `beta_1..beta_T`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one timestep".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let mut all = Vec::with_capacity(betas.len() + 1);
        all.push(0.0);
        all.extend_from_slice(betas);
        let mut alpha_bars = Vec::with_capacity(all.len());
        let mut acc = 1.0;
        alpha_bars.push(acc);
        for &b in betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        if alpha_bars.windows(2).any(|w| !(w[1] < w[0])) || alpha_bars.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidArgument("alpha_bar must decrease strictly and stay positive".into()));
        }
        Ok(Self { betas: all, alpha_bars })
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn t_norm(&self, t: usize) -> f64 {
        t as f64 / self.timesteps() as f64
    }

    /// Timestep closest to `fraction * T`, at least 1.
    pub fn timestep_at(&self, fraction: f64) -> usize {
        ((fraction * self.timesteps() as f64).round() as usize).clamp(1, self.timesteps())
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t > self.timesteps() {
            return Err(Error::TimestepOutOfRange { t, max: self.timesteps() });
        }
        Ok(())
    }

    fn check_noisy(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::TimestepOutOfRange { t, max: self.timesteps() });
        }
        Ok(())
    }

    /// DDIM `sigma` between `t` and `t_prev` for stochasticity `eta`.
    pub fn ddim_sigma(&self, t: usize, t_prev: usize, eta: f64) -> f64 {
        let (a, ap) = (self.alpha_bar(t), self.alpha_bar(t_prev));
        eta * ((1.0 - ap) / (1.0 - a)).sqrt() * (1.0 - a / ap).sqrt()
    }

    /// Coefficients of the deterministic step `x_prev = a x_t + b eps(x_t, t)`.
    pub fn ddim_coefficients(&self, t: usize, t_prev: usize) -> (f64, f64) {
        let (a, ap) = (self.alpha_bar(t), self.alpha_bar(t_prev));
        let coef_x = (ap / a).sqrt();
        let coef_eps = -(ap * (1.0 - a) / a).sqrt() + (1.0 - ap).sqrt();
        (coef_x, coef_eps)
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("timesteps".to_string(), self.timesteps().to_string());
        kv.insert("beta-start".to_string(), self.beta(1).to_string());
        kv.insert("beta-end".to_string(), self.beta(self.timesteps()).to_string());
        kv
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(Self::DEFAULT_TIMESTEPS, Self::DEFAULT_BETA_START, Self::DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

/// Sampler settings for reverse generation.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
}

impl SamplerConfig {
    /// Strictly decreasing reverse timesteps from `from` down to 0, `steps` intervals.
    pub fn reverse_timesteps(&self, from: usize) -> Vec<usize> {
        let mut ts = strided_timesteps(from, self.steps);
        ts.reverse();
        ts
    }
}

/// `steps + 1` strictly increasing timesteps from 0 to `to` (fewer when `steps > to`).
pub fn strided_timesteps(to: usize, steps: usize) -> Vec<usize> {
    let steps = steps.clamp(1, to.max(1));
    let mut ts: Vec<usize> = (0..=steps).map(|i| ((i * to) as f64 / steps as f64).round() as usize).collect();
    ts.dedup();
    ts
}

/// `sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
pub fn forward_noise(schedule: &NoiseSchedule, x0: ArrayView1<f64>, t: usize, eps: ArrayView1<f64>) -> Result<Array1<f64>> {
    schedule.check(t)?;
    let a = schedule.alpha_bar(t);
    Ok(&x0 * a.sqrt() + &eps * (1.0 - a).sqrt())
}

/// Score implied by a noise prediction: `-eps / sqrt(1 - ab_t)`.
pub fn score_from_eps(eps: ArrayView1<f64>, schedule: &NoiseSchedule, t: usize) -> Result<Array1<f64>> {
    schedule.check_noisy(t)?;
    Ok(&eps * (-1.0 / (1.0 - schedule.alpha_bar(t)).sqrt()))
}

/// Scale mapping `eps` predictions to scores at `t`.
pub fn score_scale(schedule: &NoiseSchedule, t: usize) -> Result<f64> {
    schedule.check_noisy(t)?;
    Ok(-1.0 / (1.0 - schedule.alpha_bar(t)).sqrt())
}

/// One ancestral DDPM step with `sigma_t^2 = beta_t`.
pub fn ddpm_step<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_t: ArrayView1<f64>,
    t: usize,
    z: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    schedule.check_noisy(t)?;
    let eps = model.eps(x_t, schedule.t_norm(t));
    let beta = schedule.beta(t);
    let mean = (&x_t - &(eps * (beta / (1.0 - schedule.alpha_bar(t)).sqrt()))) / (1.0 - beta).sqrt();
    Ok(mean + &z * beta.sqrt())
}

/// One DDIM step from `t` to `t_prev < t`.
pub fn ddim_step<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_t: ArrayView1<f64>,
    t: usize,
    t_prev: usize,
    eta: f64,
    z: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let xs = x_t.insert_axis(Axis(0));
    let zs = z.insert_axis(Axis(0));
    Ok(ddim_step_batch(model, schedule, xs, t, t_prev, eta, Some(zs))?.index_axis_move(Axis(0), 0))
}

/// Row-wise DDIM step. `z = None` is a zero draw.
pub fn ddim_step_batch<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    xs: ArrayView2<f64>,
    t: usize,
    t_prev: usize,
    eta: f64,
    z: Option<ArrayView2<f64>>,
) -> Result<Array2<f64>> {
    schedule.check_noisy(t)?;
    if t_prev >= t {
        return Err(Error::InvalidArgument(format!("t_prev = {t_prev} must be below t = {t}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside [0, 1]")));
    }
    let (a, ap) = (schedule.alpha_bar(t), schedule.alpha_bar(t_prev));
    let sigma = schedule.ddim_sigma(t, t_prev, eta);
    let mut dir_var = 1.0 - ap - sigma * sigma;
    if dir_var < 0.0 {
        // rounding at eta = 1 can leave a residue of a few ulps
        if dir_var > -1e-12 {
            dir_var = 0.0;
        } else {
            return Err(Error::NegativeVariance(dir_var));
        }
    }
    let eps = model.eps_batch(xs, schedule.t_norm(t));
    let x0_pred = (&xs - &(&eps * (1.0 - a).sqrt())) / a.sqrt();
    let mut out = x0_pred * ap.sqrt() + eps * dir_var.sqrt();
    if let Some(z) = z {
        if sigma > 0.0 {
            out = out + &z * sigma;
        }
    }
    Ok(out)
}

/// Deterministic DDIM inversion of `x0` to timestep `tau` over every intermediate step.
pub fn ddim_invert<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x0: ArrayView1<f64>,
    tau: usize,
) -> Result<Array1<f64>> {
    Ok(ddim_invert_batch(model, schedule, x0.insert_axis(Axis(0)), tau, tau)?.index_axis_move(Axis(0), 0))
}

/// Row-wise DDIM inversion from 0 to `tau` with `steps` uniform intervals.
///
/// Each step applies `x_t = (x_prev - b eps(x_prev, t)) / a`, the explicit
/// approximation of the implicit inverse of the deterministic reverse step.
pub fn ddim_invert_batch<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x0: ArrayView2<f64>,
    tau: usize,
    steps: usize,
) -> Result<Array2<f64>> {
    schedule.check(tau)?;
    let mut x = x0.to_owned();
    if tau == 0 {
        return Ok(x);
    }
    for pair in strided_timesteps(tau, steps).windows(2) {
        let (t_prev, t) = (pair[0], pair[1]);
        let (coef_x, coef_eps) = schedule.ddim_coefficients(t, t_prev);
        let eps = model.eps_batch(x.view(), schedule.t_norm(t));
        x = (x - eps * coef_eps) / coef_x;
    }
    Ok(x)
}

/// Deterministic (`eta = 0`) decoding of `x_tau` back to `t = 0` over every step.
pub fn ddim_reverse<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_tau: ArrayView1<f64>,
    tau: usize,
) -> Result<Array1<f64>> {
    Ok(ddim_reverse_batch(model, schedule, x_tau.insert_axis(Axis(0)), tau, tau)?.index_axis_move(Axis(0), 0))
}

/// Row-wise deterministic decoding from `tau` to 0 with `steps` uniform intervals.
pub fn ddim_reverse_batch<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x_tau: ArrayView2<f64>,
    tau: usize,
    steps: usize,
) -> Result<Array2<f64>> {
    schedule.check(tau)?;
    let mut x = x_tau.to_owned();
    if tau == 0 {
        return Ok(x);
    }
    let ts = strided_timesteps(tau, steps);
    for pair in ts.windows(2).rev() {
        x = ddim_step_batch(model, schedule, x.view(), pair[1], pair[0], 0.0, None)?;
    }
    Ok(x)
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Ancestral DDPM sampling of `n` points from the Gaussian prior at `T`.
pub fn sample_ddpm<M: EpsModel + ?Sized>(model: &M, schedule: &NoiseSchedule, n: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = seed::rng(seed);
    let d = model.dim();
    let mut x = standard_normal(n, d, &mut rng);
    for t in (1..=schedule.timesteps()).rev() {
        let eps = model.eps_batch(x.view(), schedule.t_norm(t));
        let beta = schedule.beta(t);
        x = (x - eps * (beta / (1.0 - schedule.alpha_bar(t)).sqrt())) / (1.0 - beta).sqrt();
        if t > 1 {
            x = x + standard_normal(n, d, &mut rng) * beta.sqrt();
        }
    }
    Ok(x)
}

/// DDIM sampling of `n` points from the Gaussian prior at `T`.
pub fn sample_ddim<M: EpsModel + ?Sized>(model: &M, schedule: &NoiseSchedule, n: usize, cfg: &SamplerConfig) -> Result<Array2<f64>> {
    let mut rng = seed::rng(cfg.seed);
    let d = model.dim();
    let mut x = standard_normal(n, d, &mut rng);
    let ts = cfg.reverse_timesteps(schedule.timesteps());
    for pair in ts.windows(2) {
        let z = standard_normal(n, d, &mut rng);
        x = ddim_step_batch(model, schedule, x.view(), pair[0], pair[1], cfg.eta, Some(z.view()))?;
    }
    Ok(x)
}

/// Weights of a guided score combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceSpec {
    /// Guidance scale `w` applied against the unconditional score.
    pub scale: f64,
    /// Weight `w_neg` of the negative-condition score.
    pub negative_scale: f64,
}

impl GuidanceSpec {
    pub fn new(scale: f64, negative_scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && negative_scale >= 0.0) {
            return Err(Error::InvalidArgument("guidance scales must be nonnegative".into()));
        }
        Ok(Self { scale, negative_scale })
    }
}

/// `(w + 1) s_cond - w s_uncond - w_neg s_neg`.
pub fn guided_score(
    spec: &GuidanceSpec,
    s_cond: ArrayView1<f64>,
    s_uncond: ArrayView1<f64>,
    s_neg: ArrayView1<f64>,
) -> Array1<f64> {
    &s_cond * (spec.scale + 1.0) - &s_uncond * spec.scale - &s_neg * spec.negative_scale
}

/// Per-step and per-epoch losses of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Trains `net` on `dataset` by minimizing the noise-prediction loss.
///
/// Every example gets its own timestep `t ~ U{1..T}` and noise `eps ~ N(0, I)`.
/// The learning rate follows [`cosine_lr`] over all optimizer steps of the run.
pub fn train(
    net: &mut ScoreNet,
    schedule: &NoiseSchedule,
    dataset: &Array2<f64>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let n = dataset.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if dataset.ncols() != net.dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} columns, network dimension is {}",
            dataset.ncols(),
            net.dim()
        )));
    }
    let d = net.dim();
    let big_t = schedule.timesteps();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * batches_per_epoch;
    let mut rng = seed::rng(config.seed);
    let mut opt = OptimizerState::new(
        AdamWConfig { weight_decay: config.weight_decay, ..AdamWConfig::default() },
        &net.param_sizes(),
    );
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        step_losses: Vec::with_capacity(total_steps),
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut x_t = Array2::zeros((b, d));
            let mut t_norm = Array1::zeros(b);
            let eps = standard_normal(b, d, &mut rng);
            for (i, &idx) in chunk.iter().enumerate() {
                let t = rng.gen_range(1..=big_t);
                let a = schedule.alpha_bar(t);
                let row = &dataset.row(idx) * a.sqrt() + &eps.row(i) * (1.0 - a).sqrt();
                x_t.row_mut(i).assign(&row);
                t_norm[i] = schedule.t_norm(t);
            }
            let batch = TrainBatch { x_t, t_norm, eps };
            let lr = cosine_lr(step, total_steps, config.lr_init, config.lr_final);
            let loss = train_step(net, &batch, &mut opt, lr, config.clip_norm).map_err(|e| match e {
                Error::Diverged { loss, .. } => Error::Diverged { step, loss },
                other => other,
            })?;
            history.step_losses.push(loss);
            epoch_sum += loss * b as f64;
            step += 1;
        }
        history.epoch_losses.push(epoch_sum / n as f64);
    }
    Ok(history)
}
