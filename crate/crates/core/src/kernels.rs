//! Covariance functions over decision variables `x` and task parameters `θ`.
//!
//! Joint inputs are stored as one concatenated vector `[x…, θ…]`; the split
//! point is implied by the number of task lengthscales. A kernel with zero
//! task dimensions is an ordinary scaled RBF over `x`, which is how the
//! single-task surrogates are represented.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const DECISION_LENGTHSCALE_MIN: f64 = 0.1;
pub const DECISION_LENGTHSCALE_MAX: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionKernelParams {
    lengthscale: f64,
}

impl DecisionKernelParams {
    pub fn new(lengthscale: f64) -> Result<Self> {
        if !(DECISION_LENGTHSCALE_MIN..=DECISION_LENGTHSCALE_MAX).contains(&lengthscale) {
            return Err(Error::Input(format!(
                "decision lengthscale {lengthscale} outside [{DECISION_LENGTHSCALE_MIN}, {DECISION_LENGTHSCALE_MAX}]"
            )));
        }
        Ok(Self { lengthscale })
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }
}

impl Default for DecisionKernelParams {
    fn default() -> Self {
        Self { lengthscale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskKernelParams {
    lengthscales: Vec<f64>,
}

impl TaskKernelParams {
    pub fn new(lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Input(format!("task lengthscales must be positive, got {lengthscales:?}")));
        }
        Ok(Self { lengthscales })
    }

    /// Unit lengthscales for `dims` task dimensions.
    pub fn unit(dims: usize) -> Self {
        Self { lengthscales: vec![1.0; dims] }
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dims(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `exp(−‖x−x'‖² / 2ℓ²)`.
pub fn rbf_iso(x: &[f64], x2: &[f64], params: &DecisionKernelParams) -> Result<f64> {
    check_len("rbf_iso input", x.len(), x2.len())?;
    Ok(rbf_iso_unchecked(x, x2, params.lengthscale))
}

/// `exp(−½ Σ_v ((θ_v−θ'_v)/ℓ_v)²)`.
pub fn rbf_ard(theta: &[f64], theta2: &[f64], params: &TaskKernelParams) -> Result<f64> {
    check_len("rbf_ard input", params.dims(), theta.len())?;
    check_len("rbf_ard input", params.dims(), theta2.len())?;
    Ok(rbf_ard_unchecked(theta, theta2, &params.lengthscales))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn rbf_iso_unchecked(x: &[f64], x2: &[f64], lengthscale: f64) -> f64 {
    (-0.5 * sq_dist(x, x2) / (lengthscale * lengthscale)).exp()
}

fn rbf_ard_unchecked(t: &[f64], t2: &[f64], lengthscales: &[f64]) -> f64 {
    let s: f64 = t.iter().zip(t2).zip(lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
    (-0.5 * s).exp()
}

/// `output_scale · κ_dec(x, x') · κ_task(θ, θ')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeKernel {
    pub decision: DecisionKernelParams,
    pub task: TaskKernelParams,
    output_scale: f64,
}

impl CompositeKernel {
    pub fn new(decision: DecisionKernelParams, task: TaskKernelParams, output_scale: f64) -> Result<Self> {
        if !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(Error::Input(format!("output scale must be positive, got {output_scale}")));
        }
        Ok(Self { decision, task, output_scale })
    }

    /// Unit lengthscales and unit output scale.
    pub fn default_for(task_dims: usize) -> Self {
        Self { decision: DecisionKernelParams::default(), task: TaskKernelParams::unit(task_dims), output_scale: 1.0 }
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn task_dims(&self) -> usize {
        self.task.dims()
    }

    pub fn eval(&self, x: &[f64], theta: &[f64], x2: &[f64], theta2: &[f64]) -> Result<f64> {
        Ok(self.output_scale * rbf_iso(x, x2, &self.decision)? * rbf_ard(theta, theta2, &self.task)?)
    }

    /// Kernel between two concatenated `[x, θ]` inputs.
    pub fn eval_joint(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len("joint kernel input", a.len(), b.len())?;
        if a.len() < self.task_dims() {
            return Err(Error::Shape(format!("joint input of length {} has fewer than {} task dims", a.len(), self.task_dims())));
        }
        Ok(self.eval_joint_unchecked(a, b))
    }

    pub(crate) fn eval_joint_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = a.len() - self.task_dims();
        self.output_scale
            * rbf_iso_unchecked(&a[..d], &b[..d], self.decision.lengthscale)
            * rbf_ard_unchecked(&a[d..], &b[d..], &self.task.lengthscales)
    }

    /// Gram matrix over `(x, θ)` pairs.
    pub fn gram_matrix(&self, inputs: &[(Vec<f64>, Vec<f64>)]) -> Result<DMatrix<f64>> {
        if inputs.is_empty() {
            return Err(Error::Input("gram matrix of an empty input list".into()));
        }
        let rows: Vec<Vec<f64>> = inputs.iter().map(|(x, t)| x.iter().chain(t).copied().collect()).collect();
        for (x, t) in inputs {
            check_len("gram decision input", inputs[0].0.len(), x.len())?;
            check_len("gram task input", self.task_dims(), t.len())?;
        }
        Ok(self.gram_rows(&rows))
    }

    /// Gram matrix over concatenated rows (lengths assumed consistent).
    pub(crate) fn gram_rows(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let n = rows.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.eval_joint_unchecked(&rows[i], &rows[i]);
            for j in 0..i {
                let v = self.eval_joint_unchecked(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `rows_a × rows_b` cross-covariance.
    pub(crate) fn cross_rows(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval_joint_unchecked(&a[i], &b[j]))
    }

    /// Number of unconstrained hyperparameters: decision lengthscale, task
    /// lengthscales, output scale.
    pub fn num_raw(&self) -> usize {
        2 + self.task_dims()
    }

    /// Unconstrained coordinates: scaled-sigmoid preimage of the decision
    /// lengthscale, softplus preimages of task lengthscales and output scale.
    pub fn to_raw(&self) -> Vec<f64> {
        let mut raw = Vec::with_capacity(self.num_raw());
        let unit = (self.decision.lengthscale - DECISION_LENGTHSCALE_MIN) / (DECISION_LENGTHSCALE_MAX - DECISION_LENGTHSCALE_MIN);
        raw.push(logit(unit.clamp(1e-12, 1.0 - 1e-12)));
        raw.extend(self.task.lengthscales.iter().map(|&l| softplus_inv(l)));
        raw.push(softplus_inv(self.output_scale));
        raw
    }

    pub fn from_raw(raw: &[f64], task_dims: usize) -> Result<Self> {
        check_len("raw kernel parameters", 2 + task_dims, raw.len())?;
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite raw kernel parameters {raw:?}")));
        }
        let lengthscale = DECISION_LENGTHSCALE_MIN + (DECISION_LENGTHSCALE_MAX - DECISION_LENGTHSCALE_MIN) * sigmoid(raw[0]);
        // sigmoid can round to exactly 0 or 1; keep the result inside the box.
        let lengthscale = lengthscale.clamp(DECISION_LENGTHSCALE_MIN, DECISION_LENGTHSCALE_MAX);
        let task = raw[1..1 + task_dims].iter().map(|&r| softplus(r).max(1e-12)).collect();
        let scale = softplus(raw[1 + task_dims]).max(1e-12);
        Ok(Self {
            decision: DecisionKernelParams { lengthscale },
            task: TaskKernelParams { lengthscales: task },
            output_scale: scale,
        })
    }

    /// Derivatives of the constrained values with respect to the raw ones,
    /// in `to_raw` order.
    pub(crate) fn raw_jacobian(raw: &[f64]) -> Vec<f64> {
        let n = raw.len();
        let mut out = Vec::with_capacity(n);
        let s = sigmoid(raw[0]);
        out.push((DECISION_LENGTHSCALE_MAX - DECISION_LENGTHSCALE_MIN) * s * (1.0 - s));
        out.extend(raw[1..].iter().map(|&r| sigmoid(r)));
        out
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}
