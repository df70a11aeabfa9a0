//! Conditional denoising diffusion model with an MLP noise predictor.
//!
//! Timesteps are indexed `1..=T`; the network sees `t/T` as an input.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{data_matrices, TrainingReport};
use crate::error::{check_len, Error, Result};
use crate::generative::elite::EliteDataset;
use crate::nnet::{clip_gradient_norm, Activation, AdamState, DenseNet, Tape};

pub const HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpmConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Records per gradient step; `None` uses the whole dataset.
    pub batch_size: Option<usize>,
}

impl Default for DdpmConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1e-3,
            clip_norm: 1.0,
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            batch_size: None,
        }
    }
}

/// Linear `β̂_t` and cumulative `ᾱ_t = Π_{s≤t} (1 − β̂_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if timesteps < 2 || !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::Input(format!(
                "invalid schedule: {timesteps} steps from {beta_start} to {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..timesteps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64)
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    /// `β̂_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t` for `t` in `1..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::Input(format!("timestep {t} outside 1..={}", self.timesteps())));
        }
        Ok(())
    }

    /// `x_t = √ᾱ_t x_0 + √(1 − ᾱ_t) ε`.
    pub fn noised(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t)?;
        check_len("noise", x0.len(), eps.len())?;
        let ab = self.alpha_bar(t);
        Ok(x0.iter().zip(eps).map(|(x, e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e).collect())
    }

    /// Mean of `x_{t−1}` given `x_t` and the predicted noise.
    pub fn reverse_mean(&self, x_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t)?;
        check_len("predicted noise", x_t.len(), eps_hat.len())?;
        let (b, ab) = (self.beta(t), self.alpha_bar(t));
        let coef = b / (1.0 - ab).sqrt();
        let norm = 1.0 / (1.0 - b).sqrt();
        Ok(x_t.iter().zip(eps_hat).map(|(x, e)| (x - coef * e) * norm).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CddpmModel {
    net: DenseNet,
    schedule: NoiseSchedule,
    beta_start: f64,
    beta_end: f64,
    d: usize,
    cond_dim: usize,
}

impl CddpmModel {
    /// Untrained model; the noise predictor maps `[x_t, t/T, c]` to `ε̂`.
    pub fn new<R: Rng + ?Sized>(d: usize, cond_dim: usize, cfg: &DdpmConfig, rng: &mut R) -> Result<Self> {
        let net = DenseNet::new(&[d + 1 + cond_dim, HIDDEN, HIDDEN, HIDDEN, d], Activation::Relu, rng);
        Self::from_net(net, cfg.timesteps, cfg.beta_start, cfg.beta_end)
    }

    pub fn from_net(net: DenseNet, timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        let d = net.out_dim();
        if net.in_dim() < d + 1 {
            return Err(Error::Shape(format!("noise predictor with {} inputs cannot take {d} coordinates plus time", net.in_dim())));
        }
        let cond_dim = net.in_dim() - d - 1;
        Ok(Self { schedule: NoiseSchedule::linear(timesteps, beta_start, beta_end)?, net, beta_start, beta_end, d, cond_dim })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn schedule_endpoints(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    pub fn decision_dim(&self) -> usize {
        self.d
    }

    pub fn conditioning_dim(&self) -> usize {
        self.cond_dim
    }

    /// Draws `ε` and returns `(x_t, ε)`.
    pub fn forward_noise<R: Rng + ?Sized>(&self, x0: &[f64], t: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("decision vector", self.d, x0.len())?;
        self.schedule.check_t(t)?;
        let eps: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
        Ok((self.schedule.noised(x0, t, &eps)?, eps))
    }

    /// Noise prediction for each column of `x_t` at a shared timestep.
    pub fn predict_noise(&self, x_t: &DMatrix<f64>, t: usize, c: &[f64]) -> Result<DMatrix<f64>> {
        check_len("conditioning", self.cond_dim, c.len())?;
        let n = x_t.ncols();
        let tt = t as f64 / self.schedule.timesteps() as f64;
        let input = DMatrix::from_fn(self.d + 1 + self.cond_dim, n, |i, j| {
            if i < self.d {
                x_t[(i, j)]
            } else if i == self.d {
                tt
            } else {
                c[i - self.d - 1]
            }
        });
        self.net.forward_batch(&input)
    }

    /// Ancestral sampling from `x_T ~ N(0, I)`, clamped to `[0,1]^D`.
    pub fn sample<R: Rng + ?Sized>(&self, c: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        check_len("conditioning", self.cond_dim, c.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut x = DMatrix::from_fn(self.d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for t in (1..=self.schedule.timesteps()).rev() {
            x = self.reverse_step(&x, t, c)?;
            if t > 1 {
                let sigma = self.schedule.beta(t).sqrt();
                x.iter_mut().for_each(|v| *v += sigma * rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok((0..n).map(|j| x.column(j).iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect())
    }

    /// Noise-free part of one reverse update.
    pub fn reverse_step(&self, x_t: &DMatrix<f64>, t: usize, c: &[f64]) -> Result<DMatrix<f64>> {
        self.schedule.check_t(t)?;
        let eps = self.predict_noise(x_t, t, c)?;
        let (b, ab) = (self.schedule.beta(t), self.schedule.alpha_bar(t));
        let coef = b / (1.0 - ab).sqrt();
        Ok((x_t - eps * coef) / (1.0 - b).sqrt())
    }
}

pub fn ddpm_forward_noise<R: Rng + ?Sized>(
    x0: &[f64],
    t: usize,
    model: &CddpmModel,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.forward_noise(x0, t, rng)
}

pub fn ddpm_sample<R: Rng + ?Sized>(model: &CddpmModel, c: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    model.sample(c, n, rng)
}

/// Trains from a fresh initialization on `‖ε − ε̂(x_t, t, c)‖²` averaged over
/// coordinates and records, with `t` uniform on `1..=T`.
pub fn ddpm_train<R: Rng + ?Sized>(
    elites: &EliteDataset,
    cfg: &DdpmConfig,
    rng: &mut R,
) -> Result<(CddpmModel, TrainingReport)> {
    if elites.len() < 2 {
        return Err(Error::Input(format!("DDPM training needs at least 2 records, got {}", elites.len())));
    }
    if cfg.steps == 0 || cfg.batch_size == Some(0) {
        return Err(Error::Input("DDPM training needs positive steps and batch size".into()));
    }
    let (xs, cs) = data_matrices(elites)?;
    let (d, cond_dim, n) = (xs.nrows(), cs.nrows(), xs.ncols());
    let mut model = CddpmModel::new(d, cond_dim, cfg, rng)?;
    let mut opt = AdamState::new(&model.net, cfg.learning_rate);
    let mut tape = Tape::default();
    let timesteps = model.schedule.timesteps();
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let cols: Vec<usize> = match cfg.batch_size {
            Some(b) if b < n => (0..b).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        let b = cols.len();
        let mut input = DMatrix::zeros(d + 1 + cond_dim, b);
        let mut eps = DMatrix::zeros(d, b);
        for (j, &col) in cols.iter().enumerate() {
            let t = rng.random_range(1..=timesteps);
            let ab = model.schedule.alpha_bar(t);
            for i in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                eps[(i, j)] = e;
                input[(i, j)] = ab.sqrt() * xs[(i, col)] + (1.0 - ab).sqrt() * e;
            }
            input[(d, j)] = t as f64 / timesteps as f64;
            for i in 0..cond_dim {
                input[(d + 1 + i, j)] = cs[(i, col)];
            }
        }
        let pred = model.net.forward_record(&input, &mut tape)?;
        let diff = pred - eps;
        let scale = 1.0 / (b * d) as f64;
        let loss = diff.norm_squared() * scale;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "DDPM loss became {loss} at step {step}; last finite loss {:?}",
                losses.last()
            )));
        }
        losses.push(loss);
        let (grads, _) = model.net.backward(&tape, &(diff * (2.0 * scale)))?;
        opt.step(&mut model.net, &clip_gradient_norm(grads, cfg.clip_norm))?;
    }
    let window = (cfg.steps / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let report = TrainingReport {
        initial_loss: mean(&losses[..window]),
        final_loss: mean(&losses[losses.len() - window..]),
        losses,
    };
    Ok((model, report))
}
