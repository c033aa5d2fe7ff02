//! Small SiLU multilayer perceptron used as the noise predictor `eps(x, t)`.
//!
//! Besides the forward pass the network exposes exact input-space Jacobian
//! products in both directions: tangent propagation for `J v` and reverse
//! accumulation for `J^T u`. The time input is held fixed in both, so `J` is the
//! `D x D` Jacobian with respect to the sample coordinates only.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{clip_global_norm, cosine_lr, AdamWConfig, OptimizerState};
pub use train::{train_step, TrainBatch, TrainConfig};

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{ensure_finite, Error, Result};

/// Anything that predicts the noise `eps(x, t)` for a batch of samples sharing one
/// normalized time, together with its input Jacobian products.
///
/// Rows of `xs` are samples. Implementations do not validate their inputs; the
/// checked single-sample entry points live on [`ScoreNet`].
pub trait EpsModel: Send + Sync {
    fn dim(&self) -> usize;

    fn eps_batch(&self, xs: ArrayView2<f64>, t_norm: f64) -> Array2<f64>;

    /// Row-wise `J(x_i) v_i`.
    fn jvp_batch(&self, xs: ArrayView2<f64>, t_norm: f64, tangents: ArrayView2<f64>) -> Array2<f64>;

    /// Row-wise `J(x_i)^T u_i`.
    fn vjp_batch(&self, xs: ArrayView2<f64>, t_norm: f64, cotangents: ArrayView2<f64>)
        -> Array2<f64>;

    fn eps(&self, x: ArrayView1<f64>, t_norm: f64) -> Array1<f64> {
        row(self.eps_batch(as_row(x), t_norm))
    }

    fn jvp(&self, x: ArrayView1<f64>, t_norm: f64, v: ArrayView1<f64>) -> Array1<f64> {
        row(self.jvp_batch(as_row(x), t_norm, as_row(v)))
    }

    fn vjp(&self, x: ArrayView1<f64>, t_norm: f64, u: ArrayView1<f64>) -> Array1<f64> {
        row(self.vjp_batch(as_row(x), t_norm, as_row(u)))
    }

    /// Dense `D x D` Jacobian assembled column by column from JVPs.
    fn jacobian(&self, x: ArrayView1<f64>, t_norm: f64) -> Array2<f64> {
        let d = self.dim();
        let xs = x.insert_axis(Axis(0)).broadcast((d, d)).unwrap().to_owned();
        let basis = Array2::eye(d);
        // row i of the product is J e_i, i.e. column i of J
        self.jvp_batch(xs.view(), t_norm, basis.view()).reversed_axes()
    }
}

fn as_row(v: ArrayView1<f64>) -> ArrayView2<f64> {
    v.insert_axis(Axis(0))
}

fn row(m: Array2<f64>) -> Array1<f64> {
    m.index_axis_move(Axis(0), 0)
}

/// `eps(x, t) = scale * x`, a model whose score Jacobian is a constant multiple of
/// the identity. Used as an analytic reference for the geometry code.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearEps {
    pub dim: usize,
    pub scale: f64,
}

impl LinearEps {
    pub fn identity(dim: usize) -> Self {
        Self { dim, scale: 1.0 }
    }
}

impl EpsModel for LinearEps {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eps_batch(&self, xs: ArrayView2<f64>, _t_norm: f64) -> Array2<f64> {
        &xs * self.scale
    }

    fn jvp_batch(&self, _xs: ArrayView2<f64>, _t_norm: f64, tangents: ArrayView2<f64>) -> Array2<f64> {
        &tangents * self.scale
    }

    fn vjp_batch(
        &self,
        _xs: ArrayView2<f64>,
        _t_norm: f64,
        cotangents: ArrayView2<f64>,
    ) -> Array2<f64> {
        &cotangents * self.scale
    }
}

/// One affine layer, `z = a W^T + b` with `weight` stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform fan-in initialization on `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.gen_range(-bound..=bound));
        let bias = Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..=bound));
        Self { weight, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        a.dot(&self.weight.t()) + &self.bias
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
pub(crate) fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
pub(crate) fn silu_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Cached intermediate values of a batched forward pass.
pub(crate) struct Tape {
    /// Layer inputs: `inputs[0]` is the network input, `inputs[i]` is the SiLU output
    /// of hidden layer `i - 1`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    pub(crate) output: Array2<f64>,
}

/// Noise predictor `eps_theta(x, t)`: input `[x, t/T]` of width `D + 1`, SiLU after
/// every hidden layer, linear output of width `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNet {
    dim: usize,
    hidden: usize,
    layers: Vec<Linear>,
}

impl ScoreNet {
    /// Standard three-layer network `(D+1) -> H -> H -> D`.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self::with_layers(dim, hidden, 3, rng)
    }

    pub fn with_layers<R: Rng + ?Sized>(dim: usize, hidden: usize, n_layers: usize, rng: &mut R) -> Self {
        assert!(dim >= 1 && hidden >= 1 && n_layers >= 2, "degenerate network shape");
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let fan_in = if i == 0 { dim + 1 } else { hidden };
            let fan_out = if i + 1 == n_layers { dim } else { hidden };
            layers.push(Linear::init(fan_in, fan_out, rng));
        }
        Self { dim, hidden, layers }
    }

    /// Builds a network from explicit layers, checking the shape chain.
    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        let bad = |detail: String| Error::Format { what: "network layers", detail };
        if layers.len() < 2 {
            return Err(bad(format!("need at least 2 layers, got {}", layers.len())));
        }
        let dim = layers.last().unwrap().fan_out();
        let hidden = layers[0].fan_out();
        if layers[0].fan_in() != dim + 1 {
            return Err(bad(format!("input width {} != D + 1 = {}", layers[0].fan_in(), dim + 1)));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(bad(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layer.fan_in() != hidden {
                return Err(bad(format!("layer {i}: fan-in {} != hidden {hidden}", layer.fan_in())));
            }
            if i + 1 < layers.len() && layer.fan_out() != hidden {
                return Err(bad(format!("layer {i}: fan-out {} != hidden {hidden}", layer.fan_out())));
            }
            ensure_finite(&layer.weight, "weights")?;
            ensure_finite(&layer.bias, "biases")?;
        }
        Ok(Self { dim, hidden, layers })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    /// Sets the output layer to zero so that the network predicts zero everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    /// Flat mutable views over every parameter tensor, weights before biases per layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
            .collect()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect()
    }

    fn check_point(&self, x: ArrayView1<f64>, t_norm: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "sample has dimension {}, network expects {}",
                x.len(),
                self.dim
            )));
        }
        ensure_finite(&x, "network input")?;
        if !(0.0..=1.0).contains(&t_norm) {
            return Err(Error::InvalidArgument(format!("normalized time {t_norm} outside [0, 1]")));
        }
        Ok(())
    }

    /// `eps_theta(x, t_norm)` for a single sample.
    pub fn forward(&self, x: ArrayView1<f64>, t_norm: f64) -> Result<Array1<f64>> {
        self.check_point(x, t_norm)?;
        Ok(self.eps(x, t_norm))
    }

    /// `J_x v` with `J_x = d eps / d x` at fixed time, by tangent propagation.
    pub fn input_jvp(&self, x: ArrayView1<f64>, t_norm: f64, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_point(x, t_norm)?;
        self.check_vector(v, "tangent")?;
        Ok(self.jvp(x, t_norm, v))
    }

    /// `J_x^T u` by reverse accumulation.
    pub fn input_grad(&self, x: ArrayView1<f64>, t_norm: f64, cotangent: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_point(x, t_norm)?;
        self.check_vector(cotangent, "cotangent")?;
        Ok(self.vjp(x, t_norm, cotangent))
    }

    fn check_vector(&self, v: ArrayView1<f64>, what: &'static str) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::InvalidArgument(format!("{what} has dimension {}, expected {}", v.len(), self.dim)));
        }
        ensure_finite(&v, what)
    }

    fn with_time(xs: ArrayView2<f64>, t_norm: f64) -> Array2<f64> {
        let t = Array2::from_elem((xs.nrows(), 1), t_norm);
        concatenate![Axis(1), xs, t]
    }

    /// Forward pass over rows of `[x, t]`, keeping what the backward pass needs.
    pub(crate) fn forward_tape(&self, inputs: Array2<f64>) -> Tape {
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        acts.push(inputs);
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(acts[i].view());
            if i + 1 == n {
                return Tape { inputs: acts, pre, output: z };
            }
            acts.push(z.mapv(silu));
            pre.push(z);
        }
        unreachable!("network has at least two layers")
    }

    /// Backpropagates `grad_out` (d loss / d output) through a tape. Returns the
    /// parameter gradients (when requested) and the gradient with respect to the
    /// sample coordinates of the input (time column dropped).
    pub(crate) fn backward(
        &self,
        tape: &Tape,
        grad_out: Array2<f64>,
        want_params: bool,
    ) -> (Option<Vec<Linear>>, Array2<f64>) {
        let n = self.layers.len();
        let mut grads: Vec<Linear> = Vec::new();
        let mut g = grad_out;
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if want_params {
                grads.push(Linear {
                    weight: g.t().dot(&tape.inputs[i]).as_standard_layout().into_owned(),
                    bias: g.sum_axis(Axis(0)),
                });
            }
            if i == 0 {
                let g_in = g.dot(&layer.weight.slice(s![.., ..self.dim]));
                grads.reverse();
                return (want_params.then_some(grads), g_in);
            }
            let mut g_in = g.dot(&layer.weight);
            g_in.zip_mut_with(&tape.pre[i - 1], |gv, &z| *gv *= silu_prime(z));
            g = g_in;
        }
        unreachable!("network has at least two layers")
    }
}

impl EpsModel for ScoreNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eps_batch(&self, xs: ArrayView2<f64>, t_norm: f64) -> Array2<f64> {
        let n = self.layers.len();
        let mut a = Self::with_time(xs, t_norm);
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(a.view());
            if i + 1 < n {
                a.mapv_inplace(silu);
            }
        }
        a
    }

    fn jvp_batch(&self, xs: ArrayView2<f64>, t_norm: f64, tangents: ArrayView2<f64>) -> Array2<f64> {
        let n = self.layers.len();
        let mut a = Self::with_time(xs, t_norm);
        let first = &self.layers[0];
        // the time column carries a zero tangent
        let mut da = tangents.dot(&first.weight.slice(s![.., ..self.dim]).t());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(a.view());
            if i > 0 {
                da = da.dot(&layer.weight.t());
            }
            if i + 1 == n {
                return da;
            }
            da.zip_mut_with(&z, |d, &zv| *d *= silu_prime(zv));
            a = z.mapv(silu);
        }
        unreachable!("network has at least two layers")
    }

    fn vjp_batch(&self, xs: ArrayView2<f64>, t_norm: f64, cotangents: ArrayView2<f64>) -> Array2<f64> {
        let tape = self.forward_tape(Self::with_time(xs, t_norm));
        self.backward(&tape, cotangents.to_owned(), false).1
    }
}
