//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stellagen_core::mlp::{gelu, sinusoidal_embed, Batch, Network, NetworkConfig};
use stellagen_core::qsmetrics::FieldOnSurface;

/// Smooth periodic function `1 + Σ a cos(kθ − j·nfp·φ + p)` with few modes.
/// Stays positive when the mode count times `amplitude` is below one.
#[derive(Debug, Clone)]
pub struct BandLimited {
    pub nfp: u32,
    pub modes: Vec<(i32, i32, f64, f64)>,
}

impl BandLimited {
    pub fn random(rng: &mut ChaCha8Rng, nfp: u32, max_k: i32, max_j: i32, amplitude: f64) -> Self {
        let mut modes = Vec::new();
        for k in 0..=max_k {
            for j in -max_j..=max_j {
                if k == 0 && j <= 0 {
                    continue;
                }
                let a = amplitude * (2.0 * rng.random::<f64>() - 1.0);
                let p = 2.0 * PI * rng.random::<f64>();
                modes.push((k, j, a, p));
            }
        }
        BandLimited { nfp, modes }
    }

    pub fn eval(&self, phi: f64, theta: f64) -> f64 {
        let nfp = self.nfp as f64;
        1.0 + self
            .modes
            .iter()
            .map(|&(k, j, a, p)| a * (k as f64 * theta - j as f64 * nfp * phi + p).cos())
            .sum::<f64>()
    }
}

/// J_QS by direct quadrature in helical coordinates `(φ, η = θ − N·nfp·φ)`.
///
/// Each line of constant `η` is integrated over `φ ∈ [0, 2π)` with
/// `n_phi` points; the change of variables has unit Jacobian.
pub fn j_qs_helical_quadrature(
    b: impl Fn(f64, f64) -> f64,
    w: impl Fn(f64, f64) -> f64,
    nfp: u32,
    helicity: u32,
    n_phi: usize,
    n_eta: usize,
) -> f64 {
    let slope = (helicity * nfp) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for l in 0..n_eta {
        let eta = 2.0 * PI * l as f64 / n_eta as f64;
        let nodes: Vec<(f64, f64)> = (0..n_phi)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / n_phi as f64;
                let theta = eta + slope * phi;
                (b(phi, theta), w(phi, theta))
            })
            .collect();
        let wsum: f64 = nodes.iter().map(|(_, w)| w).sum();
        let bqs = nodes.iter().map(|(b, w)| b * w).sum::<f64>() / wsum;
        for (bv, wv) in nodes {
            num += (bv - bqs).powi(2) * wv;
            den += bqs * bqs * wv;
        }
    }
    (num / den).sqrt()
}

/// Sample analytic `b` and `w` on the module's `(φ, θ)` grid.
pub fn field_on_grid(
    b: impl Fn(f64, f64) -> f64,
    w: impl Fn(f64, f64) -> f64,
    nfp: u32,
    helicity: u32,
    n_phi: usize,
    n_theta: usize,
) -> FieldOnSurface {
    let mut bv = Vec::with_capacity(n_phi * n_theta);
    let mut wv = Vec::with_capacity(n_phi * n_theta);
    for i in 0..n_phi {
        for k in 0..n_theta {
            let phi = 2.0 * PI * i as f64 / n_phi as f64;
            let theta = 2.0 * PI * k as f64 / n_theta as f64;
            bv.push(b(phi, theta));
            wv.push(w(phi, theta));
        }
    }
    FieldOnSurface::new(nfp, helicity, n_phi, n_theta, bv, wv).unwrap()
}

/// Loss of the network by a plain scalar forward pass, sample by sample:
/// embeddings, heads, GELU trunk, linear output, then mean squared error
/// over batch and output dimensions.
pub fn reference_loss(net: &Network, batch: &Batch) -> f64 {
    let cfg = net.config();
    let layers = net.layers();
    let n_hidden = cfg.hidden_layers;
    let dense = |l: usize, input: &[f64]| -> Vec<f64> {
        let d = layers[l];
        (0..d.weight.nrows())
            .map(|o| d.bias[o] + (0..input.len()).map(|i| d.weight[[o, i]] * input[i]).sum::<f64>())
            .collect()
    };
    let embed_all = |values: &[f64], dim: usize| -> Vec<f64> {
        values
            .iter()
            .flat_map(|&v| sinusoidal_embed(v, dim).unwrap())
            .collect()
    };
    let n = batch.x.nrows();
    let mut total = 0.0;
    for r in 0..n {
        let x: Vec<f64> = batch.x.row(r).to_vec();
        let y: Vec<f64> = batch.y.row(r).to_vec();
        let mut h = dense(0, &embed_all(&x, cfg.x_sinusoid_dim));
        h.extend(dense(1, &embed_all(&[batch.t[r]], cfg.t_sinusoid_dim)));
        h.extend(dense(2, &embed_all(&y, cfg.y_sinusoid_dim)));
        for l in 0..n_hidden {
            h = dense(3 + l, &h).into_iter().map(gelu).collect();
        }
        let out = dense(3 + n_hidden, &h);
        for (o, t) in out.iter().zip(batch.target.row(r)) {
            total += (o - t).powi(2);
        }
    }
    total / (n * cfg.output_dim) as f64
}

pub fn random_batch(rng: &mut ChaCha8Rng, cfg: &NetworkConfig, n: usize, t_max: usize) -> Batch {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let x = Array2::from_shape_fn((n, cfg.input_dim), |_| normal());
    let y = Array2::from_shape_fn((n, 4), |_| normal());
    let target = Array2::from_shape_fn((n, cfg.output_dim), |_| normal());
    let t = (0..n).map(|_| rng.random_range(1..=t_max) as f64).collect();
    Batch { x, t, y, target }
}

/// Small random network shape for gradient checks.
pub fn random_config(rng: &mut ChaCha8Rng) -> NetworkConfig {
    let input_dim = rng.random_range(1..=4);
    let even = |rng: &mut ChaCha8Rng| 2 * rng.random_range(1..=3);
    NetworkConfig {
        input_dim,
        hidden_width: rng.random_range(2..=8),
        hidden_layers: rng.random_range(1..=3),
        x_embed_dim: rng.random_range(1..=5),
        t_embed_dim: rng.random_range(1..=5),
        y_embed_dim: rng.random_range(1..=5),
        output_dim: input_dim,
        x_sinusoid_dim: even(rng),
        t_sinusoid_dim: even(rng),
        y_sinusoid_dim: even(rng),
    }
}

/// Largest relative discrepancy between analytic gradients and fourth-order
/// central differences of [`reference_loss`] over every parameter.
///
/// Relative error is `|a − d| / max(|a|, |d|, floor)`.
pub fn worst_gradient_error(net: &Network, batch: &Batch, h: f64, floor: f64) -> (f64, usize) {
    let (_, grads) = net.backward(batch).unwrap();
    let analytic = grads.flatten();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut index = 0;
    let n_layers = probe.layers().len();
    for l in 0..n_layers {
        let n_w = probe.layers()[l].weight.len();
        let n_b = probe.layers()[l].bias.len();
        for p in 0..n_w + n_b {
            let nudge = |net: &mut Network, delta: f64| {
                let mut layers = net.layers_mut();
                let d = &mut layers[l];
                if p < n_w {
                    let v = d.weight.as_slice_mut().unwrap();
                    v[p] += delta;
                } else {
                    d.bias[p - n_w] += delta;
                }
            };
            let mut at = |offset: f64| {
                nudge(&mut probe, offset * h);
                let loss = reference_loss(&probe, batch);
                nudge(&mut probe, -offset * h);
                loss
            };
            let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
            let a = analytic[index];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
            index += 1;
        }
    }
    (worst, index)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample mean and unbiased variance.
pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Whether the sample moments of `n` Gaussian draws are within `k` standard
/// errors of `(mean, var)`.
pub fn gaussian_moments_agree(sample: (f64, f64), mean: f64, var: f64, n: usize, k: f64) -> bool {
    let se_mean = (var / n as f64).sqrt();
    let se_var = var * (2.0 / (n as f64 - 1.0)).sqrt();
    (sample.0 - mean).abs() <= k * se_mean && (sample.1 - var).abs() <= k * se_var
}

/// One-dimensional conditional Gaussian: `x0 | y ~ N(y, spread²)` with
/// `y = ±1` stored in the first condition slot.
pub fn toy_dataset(n: usize, spread: f64, seed: u64) -> stellagen_core::dataset::Dataset {
    use stellagen_core::dataset::{Conditions, Dataset, Record};
    let mut rng = seeded(seed);
    let records = (0..n)
        .map(|k| {
            let y = if k % 2 == 0 { 1.0 } else { -1.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            Record {
                id: format!("toy{k}"),
                features: vec![y + spread * z],
                conditions: Conditions([y, 0.0, 0.0, 0.0]),
            }
        })
        .collect();
    Dataset::new(1, records).unwrap()
}

pub fn toy_network_config() -> NetworkConfig {
    NetworkConfig {
        input_dim: 1,
        hidden_width: 64,
        hidden_layers: 2,
        x_embed_dim: 16,
        t_embed_dim: 16,
        y_embed_dim: 16,
        output_dim: 1,
        x_sinusoid_dim: 8,
        t_sinusoid_dim: 16,
        y_sinusoid_dim: 8,
    }
}
