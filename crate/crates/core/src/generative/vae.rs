//! Conditional VAE with a two-dimensional latent space.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{clip_jointly, data_matrices, TrainingReport};
use crate::error::{check_len, Error, Result};
use crate::generative::elite::EliteDataset;
use crate::nnet::{Activation, AdamState, DenseNet, Tape};

pub const LATENT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub clip_norm: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 0.1, kl_weight: 0.001, clip_norm: 1.0 }
    }
}

/// Encoder `[x, c] → D → (mean, logvar)` and decoder `[z, c] → D → x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    encoder: DenseNet,
    decoder: DenseNet,
    d: usize,
    cond_dim: usize,
}

/// `KL(N(μ, diag e^{logvar}) ‖ N(0, I))`.
pub fn kl_divergence(mean: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mean.iter().zip(logvar).map(|(m, lv)| lv.exp() + m * m - 1.0 - lv).sum::<f64>()
}

impl CvaeModel {
    /// Freshly initialized (untrained) model.
    pub fn new<R: Rng + ?Sized>(d: usize, cond_dim: usize, rng: &mut R) -> Self {
        Self {
            encoder: DenseNet::new(&[d + cond_dim, d, 2 * LATENT_DIM], Activation::Relu, rng),
            decoder: DenseNet::new(&[LATENT_DIM + cond_dim, d, d], Activation::Relu, rng),
            d,
            cond_dim,
        }
    }

    pub fn from_nets(encoder: DenseNet, decoder: DenseNet) -> Result<Self> {
        let d = decoder.out_dim();
        if encoder.out_dim() != 2 * LATENT_DIM || decoder.in_dim() < LATENT_DIM {
            return Err(Error::Shape("encoder/decoder do not match a two-dimensional latent".into()));
        }
        let cond_dim = decoder.in_dim() - LATENT_DIM;
        if encoder.in_dim() != d + cond_dim {
            return Err(Error::Shape(format!(
                "encoder takes {} inputs, expected {}",
                encoder.in_dim(),
                d + cond_dim
            )));
        }
        Ok(Self { encoder, decoder, d, cond_dim })
    }

    pub fn encoder(&self) -> &DenseNet {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseNet {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut DenseNet {
        &mut self.encoder
    }

    pub fn decision_dim(&self) -> usize {
        self.d
    }

    pub fn conditioning_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn encode(&self, x: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("decision vector", self.d, x.len())?;
        check_len("conditioning", self.cond_dim, c.len())?;
        let input: Vec<f64> = x.iter().chain(c).copied().collect();
        let out = self.encoder.forward(&input)?;
        Ok((out[..LATENT_DIM].to_vec(), out[LATENT_DIM..].to_vec()))
    }

    /// Decoder mean, unclamped.
    pub fn decode(&self, z: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        check_len("latent", LATENT_DIM, z.len())?;
        check_len("conditioning", self.cond_dim, c.len())?;
        let input: Vec<f64> = z.iter().chain(c).copied().collect();
        self.decoder.forward(&input)
    }

    /// Draws `z ~ N(0, I)` and decodes, clamped to `[0,1]^D`.
    pub fn sample<R: Rng + ?Sized>(&self, c: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        check_len("conditioning", self.cond_dim, c.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut input = DMatrix::zeros(LATENT_DIM + self.cond_dim, n);
        for j in 0..n {
            for i in 0..LATENT_DIM {
                input[(i, j)] = rng.sample(StandardNormal);
            }
            for (i, &v) in c.iter().enumerate() {
                input[(LATENT_DIM + i, j)] = v;
            }
        }
        let out = self.decoder.forward_batch(&input)?;
        Ok((0..n).map(|j| out.column(j).iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect())
    }
}

pub fn cvae_sample<R: Rng + ?Sized>(model: &CvaeModel, c: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    model.sample(c, n, rng)
}

/// Full-batch training from a fresh initialization. Returns the parameters
/// with the lowest epoch loss.
pub fn cvae_train<R: Rng + ?Sized>(
    elites: &EliteDataset,
    cfg: &VaeConfig,
    rng: &mut R,
) -> Result<(CvaeModel, TrainingReport)> {
    if elites.len() < 2 {
        return Err(Error::Input(format!("VAE training needs at least 2 records, got {}", elites.len())));
    }
    if cfg.epochs == 0 {
        return Err(Error::Input("VAE training needs at least one epoch".into()));
    }
    let (xs, cs) = data_matrices(elites)?;
    let (d, cond_dim, batch) = (xs.nrows(), cs.nrows(), xs.ncols());
    let mut model = CvaeModel::new(d, cond_dim, rng);
    let mut enc_opt = AdamState::new(&model.encoder, cfg.learning_rate);
    let mut dec_opt = AdamState::new(&model.decoder, cfg.learning_rate);
    let (mut enc_tape, mut dec_tape) = (Tape::default(), Tape::default());
    let enc_in = DMatrix::from_fn(d + cond_dim, batch, |i, j| if i < d { xs[(i, j)] } else { cs[(i - d, j)] });
    let scale = 1.0 / batch as f64;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, CvaeModel)> = None;

    for epoch in 0..cfg.epochs {
        let enc_out = model.encoder.forward_record(&enc_in, &mut enc_tape)?;
        let eps = DMatrix::from_fn(LATENT_DIM, batch, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut dec_in = DMatrix::zeros(LATENT_DIM + cond_dim, batch);
        let mut kl = 0.0;
        for j in 0..batch {
            for i in 0..LATENT_DIM {
                let (mu, lv) = (enc_out[(i, j)], enc_out[(LATENT_DIM + i, j)]);
                dec_in[(i, j)] = mu + (0.5 * lv).exp() * eps[(i, j)];
                kl += 0.5 * (lv.exp() + mu * mu - 1.0 - lv);
            }
            for i in 0..cond_dim {
                dec_in[(LATENT_DIM + i, j)] = cs[(i, j)];
            }
        }
        let recon = model.decoder.forward_record(&dec_in, &mut dec_tape)?;
        let diff = &recon - &xs;
        let loss = scale * (diff.norm_squared() + cfg.kl_weight * kl);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "VAE loss became {loss} at epoch {epoch}; last finite loss {:?}",
                losses.last()
            )));
        }
        losses.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, model.clone()));
        }

        let (mut dec_grads, dec_in_grad) = model.decoder.backward(&dec_tape, &(diff * (2.0 * scale)))?;
        let mut upstream = DMatrix::zeros(2 * LATENT_DIM, batch);
        for j in 0..batch {
            for i in 0..LATENT_DIM {
                let (mu, lv) = (enc_out[(i, j)], enc_out[(LATENT_DIM + i, j)]);
                let gz = dec_in_grad[(i, j)];
                upstream[(i, j)] = gz + cfg.kl_weight * scale * mu;
                upstream[(LATENT_DIM + i, j)] =
                    gz * eps[(i, j)] * 0.5 * (0.5 * lv).exp() + cfg.kl_weight * scale * 0.5 * (lv.exp() - 1.0);
            }
        }
        let (mut enc_grads, _) = model.encoder.backward(&enc_tape, &upstream)?;
        clip_jointly(&mut [&mut enc_grads, &mut dec_grads], cfg.clip_norm);
        enc_opt.step(&mut model.encoder, &enc_grads)?;
        dec_opt.step(&mut model.decoder, &dec_grads)?;
    }
    let (final_loss, model) = best.expect("at least one epoch");
    Ok((model, TrainingReport { initial_loss: losses[0], final_loss, losses }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::elite::EliteRecord;
    use crate::rng;
    use crate::scalarize::Preference;

    fn repeated(x: &[f64], n: usize) -> EliteDataset {
        let lambda = Preference::from_direction(&[1.0, 1.0]).unwrap();
        EliteDataset {
            records: (0..n).map(|_| EliteRecord { x: x.to_vec(), lambda: lambda.clone(), theta: vec![0.9], task: 0 }).collect(),
        }
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(kl_divergence(&[1.0, 0.0], &[0.0, 0.0]) > 0.0);
    }

    #[test]
    fn memorizes_a_repeated_record() {
        let x = [0.2, 0.7, 0.4];
        let cfg = VaeConfig { epochs: 200, ..Default::default() };
        let (model, report) = cvae_train(&repeated(&x, 4), &cfg, &mut rng::stream(1, &[])).unwrap();
        assert!(report.final_loss <= report.initial_loss);
        let c = [0.5f64.sqrt(), 0.5f64.sqrt(), 0.9];
        let (mean, _) = model.encode(&x, &c).unwrap();
        let recon = model.decode(&mean, &c).unwrap();
        for (a, b) in recon.iter().zip(&x) {
            assert!((a - b).abs() < 0.05, "{recon:?}");
        }
        let samples = model.sample(&c, 64, &mut rng::stream(2, &[])).unwrap();
        let dist: f64 =
            samples.iter().map(|s| s.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0).sum::<f64>() / 64.0;
        assert!(dist < 0.1, "{dist}");
    }

    #[test]
    fn samples_are_clamped_and_reproducible() {
        let model = CvaeModel::new(4, 3, &mut rng::stream(3, &[]));
        let c = [0.6, 0.8, 0.95];
        let a = model.sample(&c, 32, &mut rng::stream(4, &[])).unwrap();
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, model.sample(&c, 32, &mut rng::stream(4, &[])).unwrap());
    }

    #[test]
    fn needs_two_records() {
        assert!(cvae_train(&repeated(&[0.1], 1), &VaeConfig::default(), &mut rng::stream(5, &[])).is_err());
    }
}
