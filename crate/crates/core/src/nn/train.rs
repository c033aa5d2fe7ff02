use ndarray::{concatenate, Array1, Array2, Axis};

use super::{clip_global_norm, OptimizerState, ScoreNet};
use crate::error::{Error, Result};

/// Settings for a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 512,
            lr_init: 1e-3,
            lr_final: 0.0,
            clip_norm: 1.0,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(0.0 <= self.lr_final && self.lr_final <= self.lr_init) {
            return bad("learning rates must satisfy 0 <= final <= initial");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip threshold must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be nonnegative");
        }
        Ok(())
    }
}

/// A minibatch of noised samples `x_t`, their normalized times and the exact noise
/// used to build them.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub x_t: Array2<f64>,
    pub t_norm: Array1<f64>,
    pub eps: Array2<f64>,
}

/// One optimizer step on the noise-prediction loss `mean_i ||eps_i - eps_theta(x_i, t_i)||^2`.
///
/// Gradients are clipped by global norm before the AdamW update. Returns the loss
/// evaluated before the update.
pub fn train_step(
    net: &mut ScoreNet,
    batch: &TrainBatch,
    opt: &mut OptimizerState,
    lr: f64,
    clip_norm: f64,
) -> Result<f64> {
    let b = batch.x_t.nrows();
    if b == 0 {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let (loss, mut grads) = loss_and_grads(net, batch);
    if !loss.is_finite() {
        return Err(Error::Diverged { step: opt.step_count() as usize, loss });
    }
    let mut grad_slices: Vec<&mut [f64]> = grads
        .iter_mut()
        .flat_map(|l| [l.weight.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
        .collect();
    clip_global_norm(&mut grad_slices, clip_norm);
    let grad_refs: Vec<&[f64]> = grad_slices.into_iter().map(|g| &*g).collect();
    opt.update(&mut net.param_slices_mut(), &grad_refs, lr);
    Ok(loss)
}

/// Loss and parameter gradients without updating anything.
pub(crate) fn loss_and_grads(net: &ScoreNet, batch: &TrainBatch) -> (f64, Vec<super::Linear>) {
    let b = batch.x_t.nrows() as f64;
    let t = batch.t_norm.view().insert_axis(Axis(1));
    let inputs = concatenate![Axis(1), batch.x_t.view(), t];
    let tape = net.forward_tape(inputs);
    let resid = &tape.output - &batch.eps;
    let loss = resid.mapv(|r| r * r).sum() / b;
    let grad_out = resid * (2.0 / b);
    let (grads, _) = net.backward(&tape, grad_out, true);
    (loss, grads.expect("parameter gradients requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamWConfig, EpsModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> TrainBatch {
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let x_t = Array2::from_shape_simple_fn((n, 2), &mut normal);
        let eps = Array2::from_shape_simple_fn((n, 2), &mut normal);
        let t_norm = Array1::linspace(0.05, 0.95, n);
        TrainBatch { x_t, t_norm, eps }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = ScoreNet::new(2, 8, &mut rng);
        let batch = random_batch(6, &mut rng);
        let (_, grads) = loss_and_grads(&net, &batch);
        let h = 1e-5;
        for (li, layer) in net.layers().iter().enumerate() {
            for idx in 0..layer.weight.len() {
                let (r, c) = (idx / layer.weight.ncols(), idx % layer.weight.ncols());
                let mut plus = net.clone();
                plus.layers_mut()[li].weight[[r, c]] += h;
                let mut minus = net.clone();
                minus.layers_mut()[li].weight[[r, c]] -= h;
                let fd = (loss_and_grads(&plus, &batch).0 - loss_and_grads(&minus, &batch).0) / (2.0 * h);
                let an = grads[li].weight[[r, c]];
                let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-3, "layer {li} w[{r},{c}]: analytic {an} vs fd {fd}");
            }
            for j in 0..layer.bias.len() {
                let mut plus = net.clone();
                plus.layers_mut()[li].bias[j] += h;
                let mut minus = net.clone();
                minus.layers_mut()[li].bias[j] -= h;
                let fd = (loss_and_grads(&plus, &batch).0 - loss_and_grads(&minus, &batch).0) / (2.0 * h);
                let an = grads[li].bias[j];
                assert!((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-3);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_only_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut net = ScoreNet::new(2, 8, &mut rng);
        let mut batch = random_batch(5, &mut rng);
        for i in 0..5 {
            let row = net.eps(batch.x_t.row(i), batch.t_norm[i]);
            batch.eps.row_mut(i).assign(&row);
        }
        let before = net.clone();
        let mut opt = OptimizerState::new(AdamWConfig::default(), &net.param_sizes());
        let loss = train_step(&mut net, &batch, &mut opt, 1e-2, 1.0).unwrap();
        assert!(loss < 1e-28);
        for (a, b) in net.layers().iter().zip(before.layers()) {
            for (p, q) in a.weight.iter().zip(b.weight.iter()) {
                assert!((p - q * (1.0 - 1e-2 * 0.01)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = ScoreNet::new(2, 4, &mut rng);
        let batch = TrainBatch { x_t: Array2::zeros((0, 2)), t_norm: Array1::zeros(0), eps: Array2::zeros((0, 2)) };
        let mut opt = OptimizerState::new(AdamWConfig::default(), &net.param_sizes());
        assert!(train_step(&mut net, &batch, &mut opt, 1e-3, 1.0).is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut net = ScoreNet::new(2, 4, &mut rng);
        let mut batch = random_batch(3, &mut rng);
        batch.eps[[0, 0]] = f64::NAN;
        let mut opt = OptimizerState::new(AdamWConfig::default(), &net.param_sizes());
        assert!(matches!(train_step(&mut net, &batch, &mut opt, 1e-3, 1.0), Err(Error::Diverged { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr_final: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: 0.0, ..Default::default() }.validate().is_err());
    }
}
