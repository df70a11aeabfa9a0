use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Problem;
use crate::error::{check_len, Error, Result};
use crate::generative::{ConditionalGenerator, GeneratorCheckpoint};
use crate::metrics::{hypervolume, nondominated};
use crate::rng::{self, label, Rng as StreamRng};
use crate::scalarize::{sample_preference, Preference};

/// Anything that maps a `(θ, λ)` query to one decision vector.
pub trait InverseSampler {
    fn decision_dim(&self) -> usize;
    fn query(&self, theta: &[f64], lambda: &Preference, rng: &mut StreamRng) -> Result<Vec<f64>>;
}

/// A trained conditional generator used as `M(θ, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    generator: Option<ConditionalGenerator>,
    d: usize,
    m: usize,
    v: usize,
}

impl InverseModel {
    pub fn new(generator: ConditionalGenerator, m: usize, v: usize) -> Result<Self> {
        if generator.conditioning_dim() != m + v {
            return Err(Error::Shape(format!(
                "generator conditions on {} values, expected {}",
                generator.conditioning_dim(),
                m + v
            )));
        }
        Ok(Self { d: generator.decision_dim(), generator: Some(generator), m, v })
    }

    /// A model with no trained generator; queries fail with a state error.
    pub fn empty(d: usize, m: usize, v: usize) -> Self {
        Self { generator: None, d, m, v }
    }

    pub fn generator(&self) -> Option<&ConditionalGenerator> {
        self.generator.as_ref()
    }

    pub fn num_objectives(&self) -> usize {
        self.m
    }

    pub fn task_dim(&self) -> usize {
        self.v
    }

    pub fn to_checkpoint(&self) -> Result<GeneratorCheckpoint> {
        Ok(self.trained()?.to_checkpoint(self.m, self.v))
    }

    pub fn from_checkpoint(ckpt: &GeneratorCheckpoint) -> Result<Self> {
        Self::new(ckpt.restore()?, ckpt.m, ckpt.v)
    }

    fn trained(&self) -> Result<&ConditionalGenerator> {
        self.generator.as_ref().ok_or_else(|| Error::State("inverse model has no trained generator".into()))
    }
}

/// One conditional sample for `(θ, λ)`; performs no objective evaluation.
pub fn inverse_query(model: &InverseModel, theta: &[f64], lambda: &Preference, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let generator = model.trained()?;
    check_len("task parameter", model.v, theta.len())?;
    check_len("preference", model.m, lambda.len())?;
    let c: Vec<f64> = lambda.as_slice().iter().chain(theta).copied().collect();
    Ok(generator.sample(&c, 1, rng)?.remove(0))
}

impl InverseSampler for InverseModel {
    fn decision_dim(&self) -> usize {
        self.d
    }

    fn query(&self, theta: &[f64], lambda: &Preference, rng: &mut StreamRng) -> Result<Vec<f64>> {
        inverse_query(self, theta, lambda, rng)
    }
}

/// Baseline ignoring the query: uniform on `[0,1]^D`.
#[derive(Debug, Clone, Copy)]
pub struct UniformSampler {
    pub d: usize,
}

impl InverseSampler for UniformSampler {
    fn decision_dim(&self) -> usize {
        self.d
    }

    fn query(&self, _theta: &[f64], _lambda: &Preference, rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok((0..self.d).map(|_| rng.random::<f64>()).collect())
    }
}

/// Baseline sampling from a generator that was never trained.
#[derive(Debug, Clone)]
pub struct UntrainedSampler(pub ConditionalGenerator);

impl InverseSampler for UntrainedSampler {
    fn decision_dim(&self) -> usize {
        self.0.decision_dim()
    }

    fn query(&self, theta: &[f64], lambda: &Preference, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let c: Vec<f64> = lambda.as_slice().iter().chain(theta).copied().collect();
        Ok(self.0.sample(&c, 1, rng)?.remove(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseTaskResult {
    pub theta: Vec<f64>,
    pub hv: f64,
    pub preferences: Vec<Preference>,
    pub solutions: Vec<Vec<f64>>,
    pub objectives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseEvaluation {
    pub tasks: Vec<InverseTaskResult>,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value). Values are
/// sorted first so the result does not depend on their order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// `w` task parameters uniform on Θ, each at least `1e-6` (max-norm) away
/// from every entry of `exclude`.
pub fn unseen_tasks(problem: &dyn Problem, w: usize, exclude: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = problem.task_bounds();
    let mut r = rng::stream(seed, &[label::INVERSE_EVAL, 0]);
    let mut out = Vec::with_capacity(w);
    while out.len() < w {
        let theta: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &h)| l + (h - l) * r.random::<f64>()).collect();
        let clash = exclude
            .iter()
            .any(|e| e.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= 1e-6);
        if !clash {
            out.push(theta);
        }
    }
    out
}

/// Queries `s` random preferences on each task in `thetas`, evaluates the
/// answers, and reports the hypervolume of each task's nondominated set.
pub fn evaluate_inverse_on(
    sampler: &dyn InverseSampler,
    problem: &dyn Problem,
    thetas: &[Vec<f64>],
    s: usize,
    reference: &[f64],
    seed: u64,
) -> Result<InverseEvaluation> {
    if thetas.is_empty() || s == 0 {
        return Err(Error::Input("inverse evaluation needs W >= 1 and S >= 1".into()));
    }
    if sampler.decision_dim() != problem.decision_dim() {
        return Err(Error::Shape("sampler and problem disagree on the decision dimension".into()));
    }
    let m = problem.num_objectives();
    let mut tasks = Vec::with_capacity(thetas.len());
    for (w, theta) in thetas.iter().enumerate() {
        let mut r = rng::stream(seed, &[label::INVERSE_EVAL, 1, w as u64]);
        let mut preferences = Vec::with_capacity(s);
        let mut solutions = Vec::with_capacity(s);
        let mut objectives = Vec::with_capacity(s);
        for _ in 0..s {
            let lambda = sample_preference(m, &mut r);
            let x = sampler.query(theta, &lambda, &mut r)?;
            objectives.push(problem.evaluate(&x, theta)?);
            solutions.push(x);
            preferences.push(lambda);
        }
        let front: Vec<Vec<f64>> = nondominated(&objectives).into_iter().map(|i| objectives[i].clone()).collect();
        let hv = hypervolume(&front, reference)?;
        tasks.push(InverseTaskResult { theta: theta.clone(), hv, preferences, solutions, objectives });
    }
    let hvs: Vec<f64> = tasks.iter().map(|t| t.hv).collect();
    let (mean, std) = mean_std(&hvs);
    Ok(InverseEvaluation { tasks, mean, std })
}

/// Draws `w` unseen tasks and runs [`evaluate_inverse_on`].
pub fn evaluate_inverse(
    sampler: &dyn InverseSampler,
    problem: &dyn Problem,
    w: usize,
    s: usize,
    exclude: &[Vec<f64>],
    reference: &[f64],
    seed: u64,
) -> Result<InverseEvaluation> {
    if w == 0 {
        return Err(Error::Input("inverse evaluation needs W >= 1".into()));
    }
    let thetas = unseen_tasks(problem, w, exclude, seed);
    evaluate_inverse_on(sampler, problem, &thetas, s, reference, seed)
}
