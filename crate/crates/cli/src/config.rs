use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stellagen_core::ddpm::{PipelineConfig, ScheduleConfig, TrainConfig};
use stellagen_core::evaluator::FieldSource;
use stellagen_core::mlp::NetworkConfig;
use stellagen_core::pca::DEFAULT_N_R;
use stellagen_core::report::Thresholds;
use stellagen_core::synth::SynthConfig;

/// Default locations of every artifact, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub pca: PathBuf,
    pub checkpoint: PathBuf,
    pub samples: PathBuf,
    pub evaluation: PathBuf,
    pub summary: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "data/dataset.jsonl".into(),
            pca: "runs/pca.json".into(),
            checkpoint: "runs/checkpoint.json".into(),
            samples: "runs/samples.jsonl".into(),
            evaluation: "runs/evaluation.csv".into(),
            summary: "runs/summary.csv".into(),
        }
    }
}

/// Network shape; the input and output width follow the PCA dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkShape {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub x_embed_dim: usize,
    pub t_embed_dim: usize,
    pub y_embed_dim: usize,
    pub x_sinusoid_dim: usize,
    pub t_sinusoid_dim: usize,
    pub y_sinusoid_dim: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        let r = NetworkConfig::reference(1);
        NetworkShape {
            hidden_width: r.hidden_width,
            hidden_layers: r.hidden_layers,
            x_embed_dim: r.x_embed_dim,
            t_embed_dim: r.t_embed_dim,
            y_embed_dim: r.y_embed_dim,
            x_sinusoid_dim: r.x_sinusoid_dim,
            t_sinusoid_dim: r.t_sinusoid_dim,
            y_sinusoid_dim: r.y_sinusoid_dim,
        }
    }
}

impl NetworkShape {
    pub fn with_dim(&self, dim: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim: dim,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            x_embed_dim: self.x_embed_dim,
            t_embed_dim: self.t_embed_dim,
            y_embed_dim: self.y_embed_dim,
            output_dim: dim,
            x_sinusoid_dim: self.x_sinusoid_dim,
            t_sinusoid_dim: self.t_sinusoid_dim,
            y_sinusoid_dim: self.y_sinusoid_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub seed: u64,
    pub m_pol: usize,
    pub n_tor: usize,
    pub synth: SynthConfig,
    pub n_r: usize,
    pub network: NetworkShape,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub scale_floor: f64,
    pub samples_per_condition: usize,
    pub thresholds: Thresholds,
    pub field_source: FieldSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            seed: 0,
            m_pol: 10,
            n_tor: 10,
            synth: SynthConfig::default(),
            n_r: DEFAULT_N_R,
            network: NetworkShape::default(),
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
            scale_floor: stellagen_core::dataset::DEFAULT_SCALE_FLOOR,
            samples_per_condition: 64,
            thresholds: Thresholds::default(),
            field_source: FieldSource::None,
        }
    }
}

/// Salt so weight initialization and batch shuffling use unrelated streams.
const NETWORK_SEED_SALT: u64 = 0x6e_6574_776f_726b;

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let config: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", p.display()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.thresholds.validate()?;
        if self.n_r == 0 {
            bail!("n_r must be positive");
        }
        if self.synth.m_pol != self.m_pol || self.synth.n_tor != self.n_tor {
            bail!(
                "synth resolution ({}, {}) differs from m_pol/n_tor ({}, {})",
                self.synth.m_pol,
                self.synth.n_tor,
                self.m_pol,
                self.n_tor
            );
        }
        self.network.with_dim(self.n_r).validate()?;
        self.schedule.build()?;
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n_r: self.n_r,
            network: self.network.with_dim(self.n_r),
            network_seed: self.seed ^ NETWORK_SEED_SALT,
            schedule: self.schedule,
            train: TrainConfig {
                seed: self.seed,
                ..self.train
            },
            scale_floor: self.scale_floor,
        }
    }
}
