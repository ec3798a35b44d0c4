//! Conditional noise-prediction network `f(x_t, t, y)`.
//!
//! Each scalar of `x_t` and `y`, and the timestep `t`, is expanded with a
//! sinusoidal embedding; each group is mixed by its own linear head, the three
//! embeddings are concatenated, and a stack of dense GELU layers followed by a
//! linear output layer predicts the injected noise. Gradients are computed by
//! hand-written backpropagation over whole batches.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::N_CONDITIONS;
use crate::error::{Error, Result};

/// Base of the geometric frequency ladder in [`sinusoidal_embed`].
pub const SINUSOID_BASE: f64 = 10_000.0;

/// `[sin(v·ω_0), cos(v·ω_0), sin(v·ω_1), …]` with `ω_k = base^(−2k/dim)`.
pub fn sinusoidal_embed(v: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must be positive and even, got {dim}"
        )));
    }
    let mut out = vec![0.0; dim];
    write_embedding(v, &mut out);
    Ok(out)
}

fn write_embedding(v: f64, out: &mut [f64]) {
    let dim = out.len();
    for k in 0..dim / 2 {
        let omega = SINUSOID_BASE.powf(-2.0 * k as f64 / dim as f64);
        let (s, c) = (v * omega).sin_cos();
        out[2 * k] = s;
        out[2 * k + 1] = c;
    }
}

/// Embed every entry of each row independently, concatenating per row.
fn embed_rows(values: ArrayView2<f64>, dim: usize) -> Array2<f64> {
    let (rows, cols) = values.dim();
    let mut out = Array2::zeros((rows, cols * dim));
    for (r, row) in values.outer_iter().enumerate() {
        let mut dst = out.row_mut(r);
        let dst = dst.as_slice_mut().expect("fresh array is contiguous");
        for (c, &v) in row.iter().enumerate() {
            write_embedding(v, &mut dst[c * dim..(c + 1) * dim]);
        }
    }
    out
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub x_embed_dim: usize,
    pub t_embed_dim: usize,
    pub y_embed_dim: usize,
    pub output_dim: usize,
    /// Sinusoid features per scalar of `x_t`.
    pub x_sinusoid_dim: usize,
    /// Sinusoid features for the timestep.
    pub t_sinusoid_dim: usize,
    /// Sinusoid features per condition scalar.
    pub y_sinusoid_dim: usize,
}

impl NetworkConfig {
    /// Large configuration: 4×2048 GELU layers, heads of width 64/128/128.
    pub fn reference(input_dim: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden_width: 2048,
            hidden_layers: 4,
            x_embed_dim: 64,
            t_embed_dim: 128,
            y_embed_dim: 128,
            output_dim: input_dim,
            x_sinusoid_dim: 16,
            t_sinusoid_dim: 128,
            y_sinusoid_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.hidden_width,
            self.hidden_layers,
            self.x_embed_dim,
            self.t_embed_dim,
            self.y_embed_dim,
            self.output_dim,
            self.x_sinusoid_dim,
            self.t_sinusoid_dim,
            self.y_sinusoid_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        if self.output_dim != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "output_dim {} must equal input_dim {}",
                self.output_dim, self.input_dim
            )));
        }
        for d in [self.x_sinusoid_dim, self.t_sinusoid_dim, self.y_sinusoid_dim] {
            if d % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "sinusoid dimensions must be even, got {d}"
                )));
            }
        }
        Ok(())
    }

    fn trunk_input(&self) -> usize {
        self.x_embed_dim + self.t_embed_dim + self.y_embed_dim
    }
}

/// Affine map `y = x·Wᵀ + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn random(inputs: usize, outputs: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (gain / inputs as f64).sqrt()).expect("positive std");
        Dense {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || normal.sample(rng)),
            bias: Array1::zeros(outputs),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.dim() == other.bias.dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    config: NetworkConfig,
    x_head: Dense,
    t_head: Dense,
    y_head: Dense,
    hidden: Vec<Dense>,
    output: Dense,
}

/// One training batch; `t` holds integer timesteps as reals.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub t: Vec<f64>,
    pub y: Array2<f64>,
    pub target: Array2<f64>,
}

/// Gradients laid out like the network's dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

struct Cache {
    x_feat: Array2<f64>,
    t_feat: Array2<f64>,
    y_feat: Array2<f64>,
    /// Trunk input followed by each hidden layer's activation.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Network {
    /// He (fan-in, gain 2) initialisation for GELU layers, fan-in gain 1 for
    /// the linear heads and output; zero biases.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let x_head = Dense::random(c.input_dim * c.x_sinusoid_dim, c.x_embed_dim, 1.0, &mut rng);
        let t_head = Dense::random(c.t_sinusoid_dim, c.t_embed_dim, 1.0, &mut rng);
        let y_head = Dense::random(N_CONDITIONS * c.y_sinusoid_dim, c.y_embed_dim, 1.0, &mut rng);
        let mut hidden = Vec::with_capacity(c.hidden_layers);
        let mut width = c.trunk_input();
        for _ in 0..c.hidden_layers {
            hidden.push(Dense::random(width, c.hidden_width, 2.0, &mut rng));
            width = c.hidden_width;
        }
        let output = Dense::random(width, c.output_dim, 1.0, &mut rng);
        Ok(Network {
            config,
            x_head,
            t_head,
            y_head,
            hidden,
            output,
        })
    }

    /// Network with every weight and bias equal to zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        for layer in net.layers_mut() {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Dense layers in fixed order: x, t, y heads, hidden layers, output.
    pub fn layers(&self) -> Vec<&Dense> {
        let mut v = vec![&self.x_head, &self.t_head, &self.y_head];
        v.extend(self.hidden.iter());
        v.push(&self.output);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut v = vec![&mut self.x_head, &mut self.t_head, &mut self.y_head];
        v.extend(self.hidden.iter_mut());
        v.push(&mut self.output);
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }

    /// Predicted noise for a single input.
    pub fn forward(&self, x: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let yb = Array2::from_shape_vec((1, y.len()), y.to_vec()).expect("row vector");
        Ok(self.forward_batch(&xb, &[t], &yb)?.into_raw_vec_and_offset().0)
    }

    /// Predicted noise for a batch: `x` is `(B, input_dim)`, `y` is `(B, 4)`.
    pub fn forward_batch(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(x, t, y)?;
        Ok(self.run(x, t, y).output)
    }

    fn check_inputs(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Result<()> {
        let c = &self.config;
        let batch = x.nrows();
        if x.ncols() != c.input_dim {
            return Err(Error::Dimension {
                expected: c.input_dim,
                found: x.ncols(),
            });
        }
        if y.ncols() != N_CONDITIONS {
            return Err(Error::Dimension {
                expected: N_CONDITIONS,
                found: y.ncols(),
            });
        }
        for len in [t.len(), y.nrows()] {
            if len != batch {
                return Err(Error::Dimension {
                    expected: batch,
                    found: len,
                });
            }
        }
        if !x.iter().chain(t).chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    fn run(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Cache {
        let c = &self.config;
        let x_feat = embed_rows(x.view(), c.x_sinusoid_dim);
        let t_col = Array2::from_shape_vec((t.len(), 1), t.to_vec()).expect("column vector");
        let t_feat = embed_rows(t_col.view(), c.t_sinusoid_dim);
        let y_feat = embed_rows(y.view(), c.y_sinusoid_dim);

        let trunk_in = concatenate![
            Axis(1),
            self.x_head.apply(&x_feat),
            self.t_head.apply(&t_feat),
            self.y_head.apply(&y_feat)
        ];
        let mut activations = vec![trunk_in];
        let mut pre_activations = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let pre = layer.apply(activations.last().expect("non-empty"));
            activations.push(pre.mapv(gelu));
            pre_activations.push(pre);
        }
        let output = self.output.apply(activations.last().expect("non-empty"));
        Cache {
            x_feat,
            t_feat,
            y_feat,
            activations,
            pre_activations,
            output,
        }
    }

    /// Mean squared error over batch and output dimensions, with exact
    /// gradients for every parameter.
    pub fn backward(&self, batch: &Batch) -> Result<(f64, Gradients)> {
        self.check_inputs(&batch.x, &batch.t, &batch.y)?;
        if batch.x.nrows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if batch.target.dim() != (batch.x.nrows(), self.config.output_dim) {
            return Err(Error::Dimension {
                expected: batch.x.nrows() * self.config.output_dim,
                found: batch.target.len(),
            });
        }
        let cache = self.run(&batch.x, &batch.t, &batch.y);
        let residual = &cache.output - &batch.target;
        let count = residual.len() as f64;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / count;
        if !loss.is_finite() {
            let max_abs = cache.output.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::NonFinite(format!(
                "loss is {loss} (max |output| = {max_abs:e}, parameters finite: {})",
                self.is_finite()
            )));
        }

        let mut upstream = residual * (2.0 / count);
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        let output_grad = dense_grad(&upstream, cache.activations.last().expect("non-empty"));
        upstream = upstream.dot(&self.output.weight);
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            Zip::from(&mut upstream)
                .and(&cache.pre_activations[l])
                .for_each(|g, &a| *g *= gelu_derivative(a));
            hidden_grads.push(dense_grad(&upstream, &cache.activations[l]));
            upstream = upstream.dot(&layer.weight);
        }
        hidden_grads.reverse();

        let c = &self.config;
        let (xe, te) = (c.x_embed_dim, c.t_embed_dim);
        let x_grad = dense_grad(&upstream.slice(s![.., ..xe]).to_owned(), &cache.x_feat);
        let t_grad = dense_grad(&upstream.slice(s![.., xe..xe + te]).to_owned(), &cache.t_feat);
        let y_grad = dense_grad(&upstream.slice(s![.., xe + te..]).to_owned(), &cache.y_feat);

        let mut layers = vec![x_grad, t_grad, y_grad];
        layers.extend(hidden_grads);
        layers.push(output_grad);
        Ok((loss, Gradients { layers }))
    }
}

fn dense_grad(upstream: &Array2<f64>, input: &Array2<f64>) -> Dense {
    Dense {
        weight: upstream.t().dot(input),
        bias: upstream.sum_axis(Axis(0)),
    }
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| Dense::zeros(l.weight.ncols(), l.weight.nrows()))
                .collect(),
        }
    }

    /// All entries flattened in layer order (weights then bias per layer).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Dense>,
    second: Vec<Dense>,
}

impl AdamState {
    pub fn new(config: AdamConfig, net: &Network) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut layers = net.layers_mut();
        if grads.layers.len() != layers.len()
            || self.first.len() != layers.len()
            || !grads
                .layers
                .iter()
                .zip(layers.iter())
                .zip(&self.first)
                .all(|((g, p), m)| g.same_shape(p) && m.same_shape(p))
        {
            return Err(Error::InvalidArgument(
                "gradient or optimizer shapes do not match the network".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let step = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(step);
        let c2 = 1.0 - beta2.powi(step);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((p, g), m), v) in layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            Zip::from(&mut p.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}
