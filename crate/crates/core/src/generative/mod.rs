//! Conditional generators over elite solutions: a VAE and a diffusion model,
//! both conditioned on `c = (λ, θ)`.

pub mod ddpm;
pub mod elite;
pub mod vae;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{DenseNet, GradientSet, NetCheckpoint};

pub use ddpm::{ddpm_forward_noise, ddpm_sample, ddpm_train, CddpmModel, DdpmConfig, NoiseSchedule};
pub use elite::{build_elite_dataset, elite_count, EliteDataset, EliteRecord, TaskSolutions};
pub use vae::{cvae_sample, cvae_train, kl_divergence, CvaeModel, VaeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss per epoch or gradient step.
    pub losses: Vec<f64>,
}

/// Decision vectors and conditionings as `D × N` and `(M+V) × N` matrices.
pub(crate) fn data_matrices(elites: &EliteDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let first = elites.records.first().ok_or_else(|| Error::Input("empty elite dataset".into()))?;
    let (d, c) = (first.x.len(), first.conditioning().len());
    let n = elites.len();
    let mut xs = DMatrix::zeros(d, n);
    let mut cs = DMatrix::zeros(c, n);
    for (j, r) in elites.records.iter().enumerate() {
        let cond = r.conditioning();
        if r.x.len() != d || cond.len() != c {
            return Err(Error::Shape("elite records differ in dimension".into()));
        }
        xs.column_mut(j).copy_from_slice(&r.x);
        cs.column_mut(j).copy_from_slice(&cond);
    }
    Ok((xs, cs))
}

/// Clips several gradient sets by their combined L2 norm.
pub(crate) fn clip_jointly(grads: &mut [&mut GradientSet], max_norm: f64) {
    let norm = grads.iter().map(|g| g.global_norm().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        grads.iter_mut().for_each(|g| g.scale(max_norm / norm));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Vae,
    Ddpm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub vae: VaeConfig,
    pub ddpm: DdpmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalGenerator {
    Vae(CvaeModel),
    Ddpm(CddpmModel),
}

impl ConditionalGenerator {
    /// Untrained generator of the given kind.
    pub fn untrained<R: Rng + ?Sized>(
        kind: GeneratorKind,
        d: usize,
        cond_dim: usize,
        cfg: &GeneratorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            GeneratorKind::Vae => Self::Vae(CvaeModel::new(d, cond_dim, rng)),
            GeneratorKind::Ddpm => Self::Ddpm(CddpmModel::new(d, cond_dim, &cfg.ddpm, rng)?),
        })
    }

    pub fn train<R: Rng + ?Sized>(
        kind: GeneratorKind,
        elites: &EliteDataset,
        cfg: &GeneratorConfig,
        rng: &mut R,
    ) -> Result<(Self, TrainingReport)> {
        Ok(match kind {
            GeneratorKind::Vae => {
                let (m, r) = cvae_train(elites, &cfg.vae, rng)?;
                (Self::Vae(m), r)
            }
            GeneratorKind::Ddpm => {
                let (m, r) = ddpm_train(elites, &cfg.ddpm, rng)?;
                (Self::Ddpm(m), r)
            }
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            Self::Vae(_) => GeneratorKind::Vae,
            Self::Ddpm(_) => GeneratorKind::Ddpm,
        }
    }

    pub fn decision_dim(&self) -> usize {
        match self {
            Self::Vae(m) => m.decision_dim(),
            Self::Ddpm(m) => m.decision_dim(),
        }
    }

    pub fn conditioning_dim(&self) -> usize {
        match self {
            Self::Vae(m) => m.conditioning_dim(),
            Self::Ddpm(m) => m.conditioning_dim(),
        }
    }

    /// `n` samples in `[0,1]^D` conditioned on `c = (λ, θ)`.
    pub fn sample<R: Rng + ?Sized>(&self, c: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        match self {
            Self::Vae(m) => m.sample(c, n, rng),
            Self::Ddpm(m) => m.sample(c, n, rng),
        }
    }

    pub fn to_checkpoint(&self, m: usize, v: usize) -> GeneratorCheckpoint {
        match self {
            Self::Vae(model) => GeneratorCheckpoint {
                kind: GeneratorKind::Vae,
                d: model.decision_dim(),
                m,
                v,
                timesteps: None,
                beta_start: None,
                beta_end: None,
                d_man: Some(vae::LATENT_DIM),
                nets: vec![
                    NamedNet { name: "encoder".into(), net: model.encoder().to_checkpoint() },
                    NamedNet { name: "decoder".into(), net: model.decoder().to_checkpoint() },
                ],
            },
            Self::Ddpm(model) => {
                let (b0, b1) = model.schedule_endpoints();
                GeneratorCheckpoint {
                    kind: GeneratorKind::Ddpm,
                    d: model.decision_dim(),
                    m,
                    v,
                    timesteps: Some(model.schedule().timesteps()),
                    beta_start: Some(b0),
                    beta_end: Some(b1),
                    d_man: None,
                    nets: vec![NamedNet { name: "eps".into(), net: model.net().to_checkpoint() }],
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedNet {
    pub name: String,
    pub net: NetCheckpoint,
}

/// JSON form of a trained generator: a small header plus its networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheckpoint {
    pub kind: GeneratorKind,
    pub d: usize,
    pub m: usize,
    pub v: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timesteps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_man: Option<usize>,
    pub nets: Vec<NamedNet>,
}

impl GeneratorCheckpoint {
    fn net(&self, name: &str) -> Result<DenseNet> {
        let named = self
            .nets
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Input(format!("checkpoint has no '{name}' network")))?;
        DenseNet::from_checkpoint(&named.net)
    }

    pub fn restore(&self) -> Result<ConditionalGenerator> {
        let generator = match self.kind {
            GeneratorKind::Vae => ConditionalGenerator::Vae(CvaeModel::from_nets(self.net("encoder")?, self.net("decoder")?)?),
            GeneratorKind::Ddpm => {
                let missing = || Error::Input("diffusion checkpoint lacks its schedule".into());
                ConditionalGenerator::Ddpm(CddpmModel::from_net(
                    self.net("eps")?,
                    self.timesteps.ok_or_else(missing)?,
                    self.beta_start.ok_or_else(missing)?,
                    self.beta_end.ok_or_else(missing)?,
                )?)
            }
        };
        if generator.decision_dim() != self.d || generator.conditioning_dim() != self.m + self.v {
            return Err(Error::Shape("checkpoint header disagrees with its networks".into()));
        }
        Ok(generator)
    }
}
