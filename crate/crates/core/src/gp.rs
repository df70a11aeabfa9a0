//! Exact Gaussian-process regression with a [`CompositeKernel`].
//!
//! Observations are sorted into a canonical order before factorization, so a
//! fitted model depends only on the multiset of observations. Targets are
//! standardized internally and predictions are returned in the original units.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{softplus, softplus_inv, sigmoid, CompositeKernel};
use crate::linalg::{cholesky_with_jitter, lower_triangular_inverse};

pub const NOISE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub input: Vec<f64>,
    pub target: f64,
}

impl Observation {
    pub fn new(input: Vec<f64>, target: f64) -> Self {
        Self { input, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Kernel plus observation-noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kernel: CompositeKernel,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(kernel: CompositeKernel, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= NOISE_FLOOR && noise_variance.is_finite()) {
            return Err(Error::Input(format!("noise variance {noise_variance} below floor {NOISE_FLOOR}")));
        }
        Ok(Self { kernel, noise_variance })
    }

    /// Unconstrained coordinates: kernel raw parameters followed by the noise.
    pub fn to_raw(&self) -> Vec<f64> {
        let mut raw = self.kernel.to_raw();
        raw.push(softplus_inv((self.noise_variance - NOISE_FLOOR).max(1e-12)));
        raw
    }

    pub fn from_raw(raw: &[f64], task_dims: usize) -> Result<Self> {
        let (k, n) = raw.split_at(raw.len().saturating_sub(1));
        let kernel = CompositeKernel::from_raw(k, task_dims)?;
        let noise = n.first().copied().ok_or_else(|| Error::Shape("missing noise parameter".into()))?;
        if !noise.is_finite() {
            return Err(Error::Numerical("non-finite noise parameter".into()));
        }
        Ok(Self { kernel, noise_variance: NOISE_FLOOR + softplus(noise) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Standardization {
    mean: f64,
    std: f64,
}

impl Standardization {
    fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    fn of(targets: &[f64]) -> Self {
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Self { mean, std: if std > 1e-12 { std } else { 1.0 } }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: Hyperparameters,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    y_norm: DVector<f64>,
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
    alpha: DVector<f64>,
    standardization: Standardization,
    jitter: f64,
}

fn canonical_order(obs: &[Observation]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    idx.sort_by(|&a, &b| {
        let (oa, ob) = (&obs[a], &obs[b]);
        for (p, q) in oa.input.iter().zip(&ob.input) {
            match p.total_cmp(q) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        oa.target.total_cmp(&ob.target)
    });
    idx
}

fn validate(obs: &[Observation], task_dims: usize) -> Result<usize> {
    let first = obs.first().ok_or_else(|| Error::Input("GP needs at least one observation".into()))?;
    let dim = first.input.len();
    if dim < task_dims {
        return Err(Error::Shape(format!("inputs of length {dim} cannot hold {task_dims} task dims")));
    }
    for o in obs {
        if o.input.len() != dim {
            return Err(Error::Shape(format!("inconsistent input lengths {dim} and {}", o.input.len())));
        }
        if !o.target.is_finite() || o.input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("observations must be finite".into()));
        }
    }
    Ok(dim)
}

/// Fits a GP with fixed hyperparameters, standardizing targets.
pub fn fit(obs: &[Observation], kernel: CompositeKernel, noise_variance: f64) -> Result<GpModel> {
    GpModel::build(obs, Hyperparameters::new(kernel, noise_variance)?, true)
}

/// Fits without target standardization (the model works in the raw target units).
pub fn fit_unstandardized(obs: &[Observation], kernel: CompositeKernel, noise_variance: f64) -> Result<GpModel> {
    GpModel::build(obs, Hyperparameters::new(kernel, noise_variance)?, false)
}

pub fn fit_with(obs: &[Observation], hyper: &Hyperparameters) -> Result<GpModel> {
    GpModel::build(obs, hyper.clone(), true)
}

impl GpModel {
    fn build(obs: &[Observation], hyper: Hyperparameters, standardize: bool) -> Result<Self> {
        validate(obs, hyper.kernel.task_dims())?;
        let order = canonical_order(obs);
        let inputs: Vec<Vec<f64>> = order.iter().map(|&i| obs[i].input.clone()).collect();
        let targets: Vec<f64> = order.iter().map(|&i| obs[i].target).collect();
        let standardization = if standardize { Standardization::of(&targets) } else { Standardization::identity() };
        let y_norm = DVector::from_iterator(
            targets.len(),
            targets.iter().map(|t| (t - standardization.mean) / standardization.std),
        );
        let mut k = hyper.kernel.gram_rows(&inputs);
        for i in 0..k.nrows() {
            k[(i, i)] += hyper.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let chol_inv = lower_triangular_inverse(&chol);
        let alpha = chol_inv.transpose() * (&chol_inv * &y_norm);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite GP weights".into()));
        }
        Ok(Self { hyper, inputs, targets, y_norm, chol, chol_inv, alpha, standardization, jitter })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn kernel(&self) -> &CompositeKernel {
        &self.hyper.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Training inputs in canonical order.
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Lower Cholesky factor of `K + (σ² + jitter)·I`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn target_mean(&self) -> f64 {
        self.standardization.mean
    }

    pub fn target_std(&self) -> f64 {
        self.standardization.std
    }

    /// Prior variance at any input, in target units.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.kernel.output_scale() * self.standardization.std.powi(2)
    }

    pub fn predict(&self, query: &[f64]) -> Result<Posterior> {
        Ok(self.predict_batch(std::slice::from_ref(&query.to_vec()))?[0])
    }

    pub fn predict_batch(&self, queries: &[Vec<f64>]) -> Result<Vec<Posterior>> {
        let dim = self.input_dim();
        if let Some(q) = queries.iter().find(|q| q.len() != dim) {
            return Err(Error::Shape(format!("query of length {} for a GP over {dim} inputs", q.len())));
        }
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let cross = self.hyper.kernel.cross_rows(queries, &self.inputs);
        let means = &cross * &self.alpha;
        let v = &cross * self.chol_inv.transpose();
        let Standardization { mean, std } = self.standardization;
        Ok(queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let prior = self.hyper.kernel.eval_joint_unchecked(q, q);
                let reduction: f64 = v.row(i).iter().map(|a| a * a).sum();
                Posterior { mean: means[i] * std + mean, variance: (prior - reduction).max(0.0) * std * std }
            })
            .collect())
    }

    /// `−½ yᵀα − Σ log L_ii − (N/2) log 2π` on the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let logdet_half: f64 = (0..self.len()).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * self.y_norm.dot(&self.alpha) - logdet_half - 0.5 * n * LN_2PI
    }

    /// Gradient of the log marginal likelihood with respect to the
    /// unconstrained hyperparameters (`Hyperparameters::to_raw` order).
    pub fn mll_gradient(&self) -> Vec<f64> {
        let n = self.len();
        let kernel = &self.hyper.kernel;
        let task_dims = kernel.task_dims();
        let d = self.input_dim() - task_dims;
        let k_inv = self.chol_inv.transpose() * &self.chol_inv;
        let ell = kernel.decision.lengthscale();
        let task_ell = kernel.task.lengthscales();
        let scale = kernel.output_scale();

        // ∂MLL/∂p = ½ Σ_ij W_ij ∂K_ij/∂p with W = ααᵀ − K⁻¹.
        let mut g_ell = 0.0;
        let mut g_task = vec![0.0; task_dims];
        let mut g_scale = 0.0;
        let mut g_noise = 0.0;
        for i in 0..n {
            let a = &self.inputs[i];
            for j in 0..=i {
                let b = &self.inputs[j];
                let w = self.alpha[i] * self.alpha[j] - k_inv[(i, j)];
                let w = if i == j { w } else { 2.0 * w };
                let kij = kernel.eval_joint_unchecked(a, b);
                let d2: f64 = a[..d].iter().zip(&b[..d]).map(|(p, q)| (p - q) * (p - q)).sum();
                g_ell += w * kij * d2 / ell.powi(3);
                for v in 0..task_dims {
                    let diff = a[d + v] - b[d + v];
                    g_task[v] += w * kij * diff * diff / task_ell[v].powi(3);
                }
                g_scale += w * kij / scale;
                if i == j {
                    g_noise += w;
                }
            }
        }
        let raw = self.hyper.to_raw();
        let jac = CompositeKernel::raw_jacobian(&raw[..raw.len() - 1]);
        let mut grad = Vec::with_capacity(raw.len());
        grad.push(0.5 * g_ell * jac[0]);
        grad.extend(g_task.iter().zip(&jac[1..1 + task_dims]).map(|(g, j)| 0.5 * g * j));
        grad.push(0.5 * g_scale * jac[1 + task_dims]);
        grad.push(0.5 * g_noise * sigmoid(raw[raw.len() - 1]));
        grad
    }

    pub fn to_checkpoint(&self, data_ref: &str) -> GpCheckpoint {
        GpCheckpoint {
            decision_lengthscale: self.hyper.kernel.decision.lengthscale(),
            task_lengthscales: self.hyper.kernel.task.lengthscales().to_vec(),
            output_scale: self.hyper.kernel.output_scale(),
            noise_variance: self.hyper.noise_variance,
            target_mean: self.standardization.mean,
            target_std: self.standardization.std,
            jitter: self.jitter,
            data_ref: data_ref.to_string(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }
}

/// JSON form of a fitted GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpCheckpoint {
    pub decision_lengthscale: f64,
    pub task_lengthscales: Vec<f64>,
    pub output_scale: f64,
    pub noise_variance: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub jitter: f64,
    pub data_ref: String,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl GpCheckpoint {
    pub fn restore(&self) -> Result<GpModel> {
        use crate::kernels::{DecisionKernelParams, TaskKernelParams};
        let kernel = CompositeKernel::new(
            DecisionKernelParams::new(self.decision_lengthscale)?,
            TaskKernelParams::new(self.task_lengthscales.clone())?,
            self.output_scale,
        )?;
        let obs: Vec<Observation> =
            self.inputs.iter().zip(&self.targets).map(|(x, &y)| Observation::new(x.clone(), y)).collect();
        fit(&obs, kernel, self.noise_variance)
    }
}

/// Log marginal likelihood and its gradient at unconstrained coordinates.
pub fn mll_and_gradient(obs: &[Observation], raw: &[f64], task_dims: usize) -> Result<(f64, Vec<f64>)> {
    let hyper = Hyperparameters::from_raw(raw, task_dims)?;
    let model = GpModel::build(obs, hyper, true)?;
    let mll = model.log_marginal_likelihood();
    if !mll.is_finite() {
        return Err(Error::Numerical(format!("non-finite marginal likelihood at {raw:?}")));
    }
    Ok((mll, model.mll_gradient()))
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub hyper: Hyperparameters,
    pub initial_mll: f64,
    pub final_mll: f64,
    /// Steps completed before stopping (fewer than requested after a numerical failure).
    pub steps: usize,
}

/// Maximizes the exact marginal likelihood with Adam over the unconstrained
/// hyperparameters, returning the best parameters visited.
pub fn train_hyperparameters(
    obs: &[Observation],
    init: &Hyperparameters,
    steps: usize,
    learning_rate: f64,
) -> Result<TrainingOutcome> {
    if steps == 0 {
        return Err(Error::Input("hyperparameter training needs at least one step".into()));
    }
    let task_dims = init.kernel.task_dims();
    let mut raw = init.to_raw();
    let (initial_mll, mut grad) = mll_and_gradient(obs, &raw, task_dims)?;
    let mut best = (initial_mll, raw.clone());
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; raw.len()];
    let mut v = vec![0.0; raw.len()];
    let mut completed = 0;
    for t in 1..=steps {
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        for i in 0..raw.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            raw[i] += learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        match mll_and_gradient(obs, &raw, task_dims) {
            Ok((mll, g)) => {
                completed = t;
                if mll > best.0 {
                    best = (mll, raw.clone());
                }
                grad = g;
            }
            Err(_) => break,
        }
    }
    Ok(TrainingOutcome {
        hyper: Hyperparameters::from_raw(&best.1, task_dims)?,
        initial_mll,
        final_mll: best.0,
        steps: completed,
    })
}
