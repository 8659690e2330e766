//! Fully connected autoencoder: deterministic Glorot initialization, forward
//! pass with activation cache, mean-squared-error loss, and exact
//! backpropagation.
//!
//! The funnel architecture comes from a single `node_size`: three encoder
//! layers at `n`, `n/2`, `n/4`, a bottleneck at `n/8`, and a mirrored decoder
//! back to the input width. Toy networks with arbitrary width chains are
//! supported for gradient checking.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub node_size: usize,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 5,
            node_size: 256,
            hidden_activation: Activation::Relu,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

impl ModelConfig {
    /// Width of every layer from input to output:
    /// `[in, n, n/2, n/4, n/8, n/4, n/2, n, in]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let n = self.node_size;
        vec![
            self.input_dim,
            n,
            n / 2,
            n / 4,
            n / 8,
            n / 4,
            n / 2,
            n,
            self.input_dim,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.node_size / 8 == 0 {
            return Err(Error::InvalidConfig(
                "node_size must be >= 8 so every width stays >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One dense layer; weights are `fan_out x fan_in`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<F> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<F>,
    pub biases: Vec<F>,
}

/// All trainable state plus the activation choices the forward pass needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters<F> {
    pub layers: Vec<Layer<F>>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl<F: Scalar> Parameters<F> {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.fan_in).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.fan_out));
        dims
    }

    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases,
    /// drawn deterministically in layer then row-major order.
    pub fn init_from_dims(
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: OutputActivation,
        seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least input and output dims".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| F::from_f64_lossy((rng.random::<f64>() * 2.0 - 1.0) * limit))
                .collect();
            layers.push(Layer {
                fan_in,
                fan_out,
                weights,
                biases: vec![F::zero(); fan_out],
            });
        }
        Ok(Parameters {
            layers,
            hidden_activation,
            output_activation,
        })
    }
}

/// Builds the configured funnel architecture.
pub fn init<F: Scalar>(config: &ModelConfig, seed: u64) -> Result<Parameters<F>> {
    config.validate()?;
    Parameters::init_from_dims(
        &config.layer_dims(),
        config.hidden_activation,
        config.output_activation,
        seed,
    )
}

/// Per-layer pre- and post-activation values from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass<F> {
    pub preacts: Vec<Vec<F>>,
    pub acts: Vec<Vec<F>>,
}

impl<F: Scalar> ForwardPass<F> {
    pub fn reconstruction(&self) -> &[F] {
        self.acts.last().expect("at least one layer")
    }
}

/// Reusable buffers so training avoids per-sample allocation.
pub(crate) struct Workspace<F> {
    pub preacts: Vec<Vec<F>>,
    pub acts: Vec<Vec<F>>,
    deltas: Vec<Vec<F>>,
}

impl<F: Scalar> Workspace<F> {
    pub fn for_params(params: &Parameters<F>) -> Self {
        let make = || {
            params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.fan_out])
                .collect::<Vec<_>>()
        };
        Workspace {
            preacts: make(),
            acts: make(),
            deltas: make(),
        }
    }

    pub fn output(&self) -> &[F] {
        self.acts.last().expect("at least one layer")
    }
}

/// Dot product with a fixed summation order (four-way unrolled) so results
/// are bit-stable and the dependency chain stays short.
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc0 = F::zero();
    let mut acc1 = F::zero();
    let mut acc2 = F::zero();
    let mut acc3 = F::zero();
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        acc0 += xa[0] * xb[0];
        acc1 += xa[1] * xb[1];
        acc2 += xa[2] * xb[2];
        acc3 += xa[3] * xb[3];
    }
    let mut rest = F::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        rest += *x * *y;
    }
    ((acc0 + acc1) + (acc2 + acc3)) + rest
}

fn apply_hidden<F: Scalar>(activation: Activation, pre: &[F], out: &mut [F]) {
    match activation {
        Activation::Relu => {
            for (o, &z) in out.iter_mut().zip(pre) {
                *o = if z > F::zero() { z } else { F::zero() };
            }
        }
        Activation::Tanh => {
            for (o, &z) in out.iter_mut().zip(pre) {
                *o = z.tanh();
            }
        }
    }
}

fn apply_output<F: Scalar>(activation: OutputActivation, pre: &[F], out: &mut [F]) {
    match activation {
        OutputActivation::Sigmoid => {
            for (o, &z) in out.iter_mut().zip(pre) {
                *o = F::one() / (F::one() + (-z).exp());
            }
        }
        OutputActivation::Linear => out.copy_from_slice(pre),
    }
}

pub(crate) fn forward_into<F: Scalar>(
    params: &Parameters<F>,
    x: &[F],
    ws: &mut Workspace<F>,
) -> Result<()> {
    let n_layers = params.layers.len();
    for (idx, layer) in params.layers.iter().enumerate() {
        // split_at_mut lets us read the previous activation while writing this one
        let (done, rest) = ws.acts.split_at_mut(idx);
        let input: &[F] = if idx == 0 { x } else { &done[idx - 1] };
        let pre = &mut ws.preacts[idx];
        for (o, p) in pre.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
            *p = layer.biases[o] + dot(row, input);
        }
        let act = &mut rest[0];
        if idx + 1 == n_layers {
            apply_output(params.output_activation, pre, act);
        } else {
            apply_hidden(params.hidden_activation, pre, act);
        }
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: format!("layer {idx}"),
            });
        }
    }
    Ok(())
}

/// Runs the network on one input, returning the reconstruction and the full
/// activation cache.
pub fn forward<F: Scalar>(params: &Parameters<F>, x: &[F]) -> Result<ForwardPass<F>> {
    if x.len() != params.input_dim() {
        return Err(Error::data(format!(
            "input width {} does not match model input dim {}",
            x.len(),
            params.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite input component"));
    }
    let mut ws = Workspace::for_params(params);
    forward_into(params, x, &mut ws)?;
    Ok(ForwardPass {
        preacts: ws.preacts,
        acts: ws.acts,
    })
}

/// Mean over components of squared differences.
pub fn loss<F: Scalar>(x: &[F], xhat: &[F]) -> F {
    assert_eq!(x.len(), xhat.len(), "loss operands must have equal width");
    let mut acc = F::zero();
    for (&a, &b) in x.iter().zip(xhat) {
        let d = b - a;
        acc += d * d;
    }
    acc / F::from_f64_lossy(x.len() as f64)
}

/// Per-parameter gradients, shaped like the layers they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub d_weights: Vec<Vec<F>>,
    pub d_biases: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &Parameters<F>) -> Self {
        Gradients {
            d_weights: params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.weights.len()])
                .collect(),
            d_biases: params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.biases.len()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.d_weights {
            w.fill(F::zero());
        }
        for b in &mut self.d_biases {
            b.fill(F::zero());
        }
    }

    pub fn scale(&mut self, factor: F) {
        for w in &mut self.d_weights {
            for v in w {
                *v *= factor;
            }
        }
        for b in &mut self.d_biases {
            for v in b {
                *v *= factor;
            }
        }
    }
}

/// Accumulates the gradient of this sample's MSE into `grads`. The forward
/// pass for `x` must already be in `ws`.
pub(crate) fn backward_accumulate<F: Scalar>(
    params: &Parameters<F>,
    x: &[F],
    ws: &mut Workspace<F>,
    grads: &mut Gradients<F>,
) {
    let n_layers = params.layers.len();
    let out_dim = params.output_dim();
    let two_over_d = F::from_f64_lossy(2.0 / out_dim as f64);

    // output delta: dL/dz = (2/d)(xhat - x) * act'(z)
    {
        let xhat = &ws.acts[n_layers - 1];
        let delta = &mut ws.deltas[n_layers - 1];
        match params.output_activation {
            OutputActivation::Sigmoid => {
                for i in 0..out_dim {
                    let a = xhat[i];
                    delta[i] = two_over_d * (a - x[i]) * a * (F::one() - a);
                }
            }
            OutputActivation::Linear => {
                for i in 0..out_dim {
                    delta[i] = two_over_d * (xhat[i] - x[i]);
                }
            }
        }
    }

    for idx in (0..n_layers).rev() {
        let layer = &params.layers[idx];
        // parameter gradients for this layer
        {
            let input: &[F] = if idx == 0 { x } else { &ws.acts[idx - 1] };
            let delta = &ws.deltas[idx];
            let dw = &mut grads.d_weights[idx];
            for (o, &d) in delta.iter().enumerate() {
                let row = &mut dw[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (slot, &inp) in row.iter_mut().zip(input) {
                    *slot += d * inp;
                }
            }
            let db = &mut grads.d_biases[idx];
            for (slot, &d) in db.iter_mut().zip(delta) {
                *slot += d;
            }
        }
        if idx == 0 {
            break;
        }
        // propagate: delta_prev = (W^T delta) ⊙ act'(a_prev)
        let (head, tail) = ws.deltas.split_at_mut(idx);
        let delta = &tail[0];
        let delta_prev = &mut head[idx - 1];
        delta_prev.fill(F::zero());
        for (o, &d) in delta.iter().enumerate() {
            let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
            for (slot, &w) in delta_prev.iter_mut().zip(row) {
                *slot += w * d;
            }
        }
        let prev_act = &ws.acts[idx - 1];
        match params.hidden_activation {
            Activation::Relu => {
                for (slot, &a) in delta_prev.iter_mut().zip(prev_act) {
                    if a <= F::zero() {
                        *slot = F::zero();
                    }
                }
            }
            Activation::Tanh => {
                for (slot, &a) in delta_prev.iter_mut().zip(prev_act) {
                    *slot *= F::one() - a * a;
                }
            }
        }
    }
}

/// Analytic gradient of the mean batch MSE with respect to every weight and
/// bias: the mean of per-sample gradients.
pub fn gradients<'a, F: Scalar>(
    params: &Parameters<F>,
    batch: impl IntoIterator<Item = &'a [F]>,
) -> Result<Gradients<F>> {
    let mut grads = Gradients::zeros_like(params);
    let mut ws = Workspace::for_params(params);
    let mut count = 0usize;
    for x in batch {
        forward_into(params, x, &mut ws)?;
        backward_accumulate(params, x, &mut ws, &mut grads);
        count += 1;
    }
    if count == 0 {
        return Err(Error::data("gradient of an empty batch"));
    }
    grads.scale(F::from_f64_lossy(1.0 / count as f64));
    Ok(grads)
}
