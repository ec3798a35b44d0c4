//! Conditional DDPM in normalized PCA-code space.
//!
//! Training draws `(x0, y)` from the data, `t ~ U{1..T}` and `z ~ N(0, I)`,
//! and regresses `z` from `(√ᾱ_t x0 + √(1−ᾱ_t) z, t, y)`. Sampling runs the
//! ancestral chain from `x_T ~ N(0, I)` down to `x_0`, with no noise on the
//! final step.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    batch_indices, fit_normalizer, ConditionRow, Conditions, Dataset, Normalizer, Record, N_CONDITIONS,
};
use crate::error::{Error, Result};
use crate::mlp::{AdamConfig, AdamState, Batch, Network, NetworkConfig};
use crate::pca::PcaModel;
use crate::surface::FourierSurface;

/// Choice of the sampler's per-step noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChoice {
    /// `σ_t² = β_t`.
    #[default]
    Beta,
    /// `σ_t² = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)`.
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sigma: SigmaChoice,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            timesteps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            sigma: SigmaChoice::Beta,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        linear_schedule(self.timesteps, self.beta_start, self.beta_end)?.with_sigma(self.sigma)
    }
}

/// Per-step quantities, stored at index `t − 1` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Linearly spaced `β_t` with `σ_t² = β_t`.
pub fn linear_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if timesteps == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one timestep".into()));
    }
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < beta_start < beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let beta: Vec<f64> = if timesteps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (timesteps - 1) as f64;
        (0..timesteps).map(|k| beta_start + step * k as f64).collect()
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    let sigma = beta.iter().map(|b| b.sqrt()).collect();
    Ok(NoiseSchedule {
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

impl NoiseSchedule {
    pub fn timesteps(&self) -> usize {
        self.beta.len()
    }

    pub fn with_sigma(mut self, choice: SigmaChoice) -> Result<Self> {
        self.sigma = match choice {
            SigmaChoice::Beta => self.beta.iter().map(|b| b.sqrt()).collect(),
            SigmaChoice::Posterior => (0..self.timesteps())
                .map(|k| {
                    let prev = if k == 0 { 1.0 } else { self.alpha_bar[k - 1] };
                    (self.beta[k] * (1.0 - prev) / (1.0 - self.alpha_bar[k])).sqrt()
                })
                .collect(),
        };
        Ok(self)
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::InvalidArgument(format!(
                "timestep {t} outside 1..={}",
                self.timesteps()
            )));
        }
        Ok(t - 1)
    }

    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.index(t)?])
    }
}

/// `√ᾱ_t · x0 + √(1 − ᾱ_t) · z`.
pub fn q_sample(schedule: &NoiseSchedule, x0: &[f64], t: usize, z: &[f64]) -> Result<Vec<f64>> {
    let ab = schedule.alpha_bar_at(t)?;
    if x0.len() != z.len() {
        return Err(Error::Dimension {
            expected: x0.len(),
            found: z.len(),
        });
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(z).map(|(x, n)| a * x + b * n).collect())
}

/// Schedule plus noise-prediction network, operating on normalized codes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    pub schedule: NoiseSchedule,
    pub network: Network,
}

impl DiffusionModel {
    pub fn dim(&self) -> usize {
        self.network.config().input_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            batch_size: 4096,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Batch-size-weighted mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub optimizer: AdamState,
}

/// Salt separating the noise stream from the batch-order stream.
const NOISE_SALT: u64 = 0x5e_ed0f_d1ff_u64;

/// Train on normalized codes for `config.epochs` epochs.
///
/// Batch order depends on `(seed, epoch)`; timesteps and noise come from a
/// separate stream keyed the same way, so runs are reproducible bit for bit.
/// On a non-finite loss the network is left at its last finite state and
/// [`Error::Diverged`] is returned.
pub fn train(model: &mut DiffusionModel, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let dim = model.dim();
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_x() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: data.n_x(),
        });
    }
    let timesteps = model.schedule.timesteps();
    let t_dist = Uniform::new_inclusive(1, timesteps).expect("non-empty range");
    let mut optimizer = AdamState::new(config.adam, &model.network);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::new();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_SALT);
        rng.set_stream(epoch as u64);
        let mut total = 0.0;
        for idx in batch_indices(data.len(), config.batch_size, config.seed, epoch as u64)? {
            let n = idx.len();
            let mut x = Array2::zeros((n, dim));
            let mut y = Array2::zeros((n, N_CONDITIONS));
            let mut target = Array2::zeros((n, dim));
            let mut t = Vec::with_capacity(n);
            for (row, &i) in idx.iter().enumerate() {
                let rec = &data.records()[i];
                let step = t_dist.sample(&mut rng);
                let ab = model.schedule.alpha_bar[step - 1];
                let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
                for j in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    target[[row, j]] = z;
                    x[[row, j]] = a * rec.features[j] + b * z;
                }
                for k in 0..N_CONDITIONS {
                    y[[row, k]] = rec.conditions.0[k];
                }
                t.push(step as f64);
            }
            let batch = Batch { x, t, y, target };
            let (loss, grads) = model.network.backward(&batch).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    step: step_losses.len(),
                    loss: f64::NAN,
                },
                other => other,
            })?;
            let previous = model.network.clone();
            optimizer.step(&mut model.network, &grads)?;
            if !model.network.is_finite() {
                model.network = previous;
                return Err(Error::Diverged {
                    epoch,
                    step: step_losses.len(),
                    loss,
                });
            }
            step_losses.push(loss);
            total += loss * n as f64;
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok(TrainOutcome {
        epoch_losses,
        step_losses,
        optimizer,
    })
}

/// Ancestral sampling of `count` normalized codes for normalized conditions
/// `y`. Draw `k` uses RNG stream `stream_offset + k`, so any subset of draws
/// can be regenerated independently.
pub fn sample(
    model: &DiffusionModel,
    y: &Conditions,
    count: usize,
    seed: u64,
    stream_offset: u64,
) -> Result<Vec<Vec<f64>>> {
    if !y.0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("sampling conditions".into()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let dim = model.dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..count)
        .map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream_offset + k as u64);
            r
        })
        .collect();
    let mut x = Array2::zeros((count, dim));
    for (k, rng) in rngs.iter_mut().enumerate() {
        for j in 0..dim {
            x[[k, j]] = StandardNormal.sample(rng);
        }
    }
    let y_batch = Array2::from_shape_fn((count, N_CONDITIONS), |(_, k)| y.0[k]);
    let s = &model.schedule;
    for t in (1..=s.timesteps()).rev() {
        let i = t - 1;
        let eps = model
            .network
            .forward_batch(&x, &vec![t as f64; count], &y_batch)
            .map_err(|_| Error::SamplingNonFinite { step: t })?;
        let scale = 1.0 / s.alpha[i].sqrt();
        let coef = (1.0 - s.alpha[i]) / (1.0 - s.alpha_bar[i]).sqrt();
        for (k, rng) in rngs.iter_mut().enumerate() {
            for j in 0..dim {
                let z: f64 = if t > 1 { StandardNormal.sample(rng) } else { 0.0 };
                x[[k, j]] = scale * (x[[k, j]] - coef * eps[[k, j]]) + s.sigma[i] * z;
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SamplingNonFinite { step: t });
        }
    }
    Ok(x.outer_iter().map(|r| r.to_vec()).collect())
}

/// Everything needed to turn conditions into boundary surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Ddpm {
    pub diffusion: DiffusionModel,
    pub pca: PcaModel,
    pub normalizer: Normalizer,
    pub m_pol: usize,
    pub n_tor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSurface {
    pub id: String,
    pub row: ConditionRow,
    pub coeffs: Vec<f64>,
    pub surface: FourierSurface,
}

impl Ddpm {
    pub fn new(
        diffusion: DiffusionModel,
        pca: PcaModel,
        normalizer: Normalizer,
        m_pol: usize,
        n_tor: usize,
    ) -> Result<Self> {
        if diffusion.dim() != pca.n_r {
            return Err(Error::Dimension {
                expected: pca.n_r,
                found: diffusion.dim(),
            });
        }
        if normalizer.n_features() != pca.n_r {
            return Err(Error::Dimension {
                expected: pca.n_r,
                found: normalizer.n_features(),
            });
        }
        if crate::surface::feature_length(m_pol, n_tor) != pca.n_x {
            return Err(Error::Dimension {
                expected: crate::surface::feature_length(m_pol, n_tor),
                found: pca.n_x,
            });
        }
        Ok(Ddpm {
            diffusion,
            pca,
            normalizer,
            m_pol,
            n_tor,
        })
    }

    /// Full coefficient vectors sampled for raw (unnormalized) conditions.
    pub fn sample_coefficients(
        &self,
        conditions: &Conditions,
        count: usize,
        seed: u64,
        stream_offset: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let y = self.normalizer.normalize_conditions(conditions);
        sample(&self.diffusion, &y, count, seed, stream_offset)?
            .iter()
            .map(|code| {
                let code = self.normalizer.denormalize_features(code)?;
                self.pca.decode(&code)
            })
            .collect()
    }
}

/// Sample `n_per_condition` surfaces for each row, tagged with the row.
pub fn generate_surfaces(
    ddpm: &Ddpm,
    rows: &[ConditionRow],
    n_per_condition: usize,
    seed: u64,
) -> Result<Vec<GeneratedSurface>> {
    let mut out = Vec::with_capacity(rows.len() * n_per_condition);
    for (r, row) in rows.iter().enumerate() {
        let offset = (r as u64) << 32;
        let coeffs = ddpm.sample_coefficients(&row.conditions(), n_per_condition, seed, offset)?;
        for (k, c) in coeffs.into_iter().enumerate() {
            let surface = FourierSurface::unpack(&c, row.nfp, ddpm.m_pol, ddpm.n_tor)?;
            out.push(GeneratedSurface {
                id: format!("{}-{r}-{k}", row.label()),
                row: row.clone(),
                coeffs: c,
                surface,
            });
        }
    }
    Ok(out)
}

/// Settings for fitting the whole pipeline from raw coefficient records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_r: usize,
    /// `input_dim`/`output_dim` are overwritten with `n_r`.
    pub network: NetworkConfig,
    pub network_seed: u64,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub scale_floor: f64,
}

/// Project raw records onto the PCA code space, keeping ids and conditions.
pub fn encode_dataset(pca: &PcaModel, data: &Dataset) -> Result<Dataset> {
    let records = data
        .records()
        .iter()
        .map(|r| {
            Ok(Record {
                id: r.id.clone(),
                features: pca.encode(&r.features)?,
                conditions: r.conditions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pca.n_r, records)
}

/// Fit PCA, the normalizer and the diffusion network on raw records.
pub fn fit_pipeline(
    raw: &Dataset,
    m_pol: usize,
    n_tor: usize,
    config: &PipelineConfig,
) -> Result<(Checkpoint, TrainOutcome)> {
    let features: Vec<&[f64]> = raw.records().iter().map(|r| r.features.as_slice()).collect();
    let pca = crate::pca::fit(&features, config.n_r)?;
    train_pipeline(raw, pca, m_pol, n_tor, config)
}

/// As [`fit_pipeline`] with a PCA model fitted beforehand; `config.n_r` is
/// ignored in favour of `pca.n_r`.
pub fn train_pipeline(
    raw: &Dataset,
    pca: PcaModel,
    m_pol: usize,
    n_tor: usize,
    config: &PipelineConfig,
) -> Result<(Checkpoint, TrainOutcome)> {
    if raw.n_x() != pca.n_x {
        return Err(Error::Dimension {
            expected: pca.n_x,
            found: raw.n_x(),
        });
    }
    let n_r = pca.n_r;
    let codes = encode_dataset(&pca, raw)?;
    let normalizer = fit_normalizer(&codes, config.scale_floor)?;
    let normalized = Dataset::new(
        n_r,
        codes
            .records()
            .iter()
            .map(|r| normalizer.normalize(r))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut net_config = config.network.clone();
    net_config.input_dim = n_r;
    net_config.output_dim = n_r;
    let mut diffusion = DiffusionModel {
        schedule: config.schedule.build()?,
        network: Network::new(net_config, config.network_seed)?,
    };
    let outcome = train(&mut diffusion, &normalized, &config.train)?;
    let checkpoint = Checkpoint {
        schedule: config.schedule,
        network: diffusion.network,
        pca,
        normalizer,
        m_pol,
        n_tor,
        optimizer: Some(outcome.optimizer.clone()),
        rng: RngState {
            seed: config.train.seed,
            epochs_completed: config.train.epochs,
        },
        epoch_losses: outcome.epoch_losses.clone(),
    };
    // catches an inconsistent m_pol/n_tor before anything is written
    checkpoint.clone().into_ddpm()?;
    Ok((checkpoint, outcome))
}

/// Seed and position of the training RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub epochs_completed: usize,
}

/// Self-contained JSON bundle for sampling and for inspecting a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schedule: ScheduleConfig,
    pub network: Network,
    pub pca: PcaModel,
    pub normalizer: Normalizer,
    pub m_pol: usize,
    pub n_tor: usize,
    pub optimizer: Option<AdamState>,
    pub rng: RngState,
    pub epoch_losses: Vec<f64>,
}

impl Checkpoint {
    pub fn into_ddpm(self) -> Result<Ddpm> {
        let diffusion = DiffusionModel {
            schedule: self.schedule.build()?,
            network: self.network,
        };
        Ddpm::new(diffusion, self.pca, self.normalizer, self.m_pol, self.n_tor)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dim: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim: dim,
            hidden_width: 16,
            hidden_layers: 2,
            x_embed_dim: 8,
            t_embed_dim: 8,
            y_embed_dim: 8,
            output_dim: dim,
            x_sinusoid_dim: 4,
            t_sinusoid_dim: 8,
            y_sinusoid_dim: 4,
        }
    }

    fn toy_data(n: usize) -> Dataset {
        let records = (0..n)
            .map(|k| {
                let y = if k % 2 == 0 { 1.0 } else { -1.0 };
                Record {
                    id: k.to_string(),
                    features: vec![y, 0.5 * y],
                    conditions: Conditions([y, 0.0, 0.0, 0.0]),
                }
            })
            .collect();
        Dataset::new(2, records).unwrap()
    }

    #[test]
    fn single_step_schedule() {
        let s = linear_schedule(1, 0.5, 0.9).unwrap();
        assert_eq!(s.alpha_bar, vec![0.5]);
    }

    #[test]
    fn schedule_identities() {
        let s = linear_schedule(200, 1e-4, 0.02).unwrap();
        for t in 0..200 {
            assert_eq!(s.alpha[t] + s.beta[t], 1.0);
            assert!(s.beta[t] > 0.0 && s.beta[t] < 1.0);
            if t > 0 {
                assert!(s.beta[t] > s.beta[t - 1]);
                assert!(s.alpha_bar[t] < s.alpha_bar[t - 1]);
                assert!((s.alpha_bar[t] / s.alpha_bar[t - 1] - s.alpha[t]).abs() < 1e-12);
            }
        }
        assert_eq!(s.sigma[10] * s.sigma[10], s.beta[10]);
    }

    #[test]
    fn posterior_sigma() {
        let s = linear_schedule(10, 1e-3, 0.2)
            .unwrap()
            .with_sigma(SigmaChoice::Posterior)
            .unwrap();
        assert_eq!(s.sigma[0], 0.0);
        let expected = s.beta[4] * (1.0 - s.alpha_bar[3]) / (1.0 - s.alpha_bar[4]);
        assert!((s.sigma[4] * s.sigma[4] - expected).abs() < 1e-15);
    }

    #[test]
    fn schedule_errors() {
        assert!(linear_schedule(0, 1e-4, 0.02).is_err());
        assert!(linear_schedule(10, 0.02, 1e-4).is_err());
        assert!(linear_schedule(10, 0.0, 0.5).is_err());
        assert!(linear_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn q_sample_branches() {
        let s = linear_schedule(50, 1e-4, 0.02).unwrap();
        let ab = s.alpha_bar[19];
        let x0 = [1.0, -2.0];
        let out = q_sample(&s, &x0, 20, &[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![ab.sqrt(), -2.0 * ab.sqrt()]);
        let out = q_sample(&s, &[0.0, 0.0], 20, &[1.0, 3.0]).unwrap();
        assert_eq!(out, vec![(1.0 - ab).sqrt(), 3.0 * (1.0 - ab).sqrt()]);
        assert!(q_sample(&s, &x0, 0, &[0.0, 0.0]).is_err());
        assert!(q_sample(&s, &x0, 51, &[0.0, 0.0]).is_err());
        assert!(q_sample(&s, &x0, 3, &[0.0]).is_err());
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let mut model = DiffusionModel {
            schedule: linear_schedule(20, 1e-4, 0.02).unwrap(),
            network: Network::new(small_config(2), 1).unwrap(),
        };
        let before = model.clone();
        let config = TrainConfig {
            epochs: 0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train(&mut model, &toy_data(16), &config).unwrap();
        assert!(out.epoch_losses.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_deterministic() {
        let config = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = DiffusionModel {
                schedule: linear_schedule(20, 1e-4, 0.02).unwrap(),
                network: Network::new(small_config(2), 1).unwrap(),
            };
            let out = train(&mut model, &toy_data(20), &config).unwrap();
            (model, out)
        };
        let (m1, o1) = run();
        let (m2, o2) = run();
        assert_eq!(o1.epoch_losses.len(), 3);
        assert_eq!(o1.step_losses.len(), 9);
        assert_eq!(o1, o2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn train_errors() {
        let mut model = DiffusionModel {
            schedule: linear_schedule(20, 1e-4, 0.02).unwrap(),
            network: Network::new(small_config(3), 1).unwrap(),
        };
        let config = TrainConfig::default();
        assert!(matches!(
            train(&mut model, &toy_data(4), &config),
            Err(Error::Dimension { .. })
        ));
        let empty = Dataset::new(3, vec![]).unwrap();
        assert!(matches!(train(&mut model, &empty, &config), Err(Error::EmptyDataset)));
    }

    #[test]
    fn divergence_is_reported() {
        let mut model = DiffusionModel {
            schedule: linear_schedule(20, 1e-4, 0.02).unwrap(),
            network: Network::new(small_config(2), 1).unwrap(),
        };
        let config = TrainConfig {
            epochs: 2,
            batch_size: 4,
            adam: AdamConfig {
                lr: 1e300,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let err = train(&mut model, &toy_data(8), &config).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        assert!(model.network.is_finite());
    }

    #[test]
    fn sampling_is_deterministic_and_stream_separable() {
        let model = DiffusionModel {
            schedule: linear_schedule(10, 1e-4, 0.02).unwrap(),
            network: Network::new(small_config(2), 3).unwrap(),
        };
        let y = Conditions([1.0, 0.0, 0.0, 0.0]);
        let a = sample(&model, &y, 5, 42, 0).unwrap();
        let b = sample(&model, &y, 5, 42, 0).unwrap();
        assert_eq!(a, b);
        let tail = sample(&model, &y, 2, 42, 3).unwrap();
        assert_eq!(tail[..], a[3..]);
        assert!(sample(&model, &y, 0, 42, 0).unwrap().is_empty());
        assert!(sample(&model, &Conditions([f64::NAN, 0.0, 0.0, 0.0]), 1, 1, 0).is_err());
    }
}
