//! Scalarized UCB acquisition over `[0,1]^D`.
//!
//! Models are passed as one GP per objective. For task-aware GPs `theta` is
//! appended to every decision vector; single-task GPs take an empty `theta`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::scalarize::{scalarize_ucb, Preference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub pool_size: usize,
    pub local_refinement_steps: usize,
    pub refinement_step_size: f64,
    pub beta_delta: f64,
    /// How many of the best pool members are hill-climbed.
    pub refine_top: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { pool_size: 512, local_refinement_steps: 20, refinement_step_size: 0.02, beta_delta: 0.1, refine_top: 4 }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::Input("pool_size must be positive".into()));
        }
        if !(self.refinement_step_size > 0.0) {
            return Err(Error::Input("refinement_step_size must be positive".into()));
        }
        if !(self.beta_delta > 0.0 && self.beta_delta < 1.0) {
            return Err(Error::Input("beta_delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `β_t = 2 log(D t² π² / (6δ))`, floored at zero. `t` is counted from 1.
pub fn beta(t: usize, d: usize, cfg: &AcquisitionConfig) -> f64 {
    let t = t.max(1) as f64;
    let arg = d as f64 * t * t * std::f64::consts::PI.powi(2) / (6.0 * cfg.beta_delta);
    (2.0 * arg.ln()).max(0.0)
}

fn joint_input(x: &[f64], theta: &[f64]) -> Vec<f64> {
    x.iter().chain(theta).copied().collect()
}

/// `−μ_m + √β σ_m` for each objective.
pub fn ucb_vector(models: &[GpModel], x: &[f64], theta: &[f64], beta: f64) -> Result<Vec<f64>> {
    Ok(ucb_batch(models, std::slice::from_ref(&x.to_vec()), theta, beta)?.remove(0))
}

/// UCB vectors for many decision vectors at once.
pub fn ucb_batch(models: &[GpModel], xs: &[Vec<f64>], theta: &[f64], beta: f64) -> Result<Vec<Vec<f64>>> {
    if models.is_empty() {
        return Err(Error::Input("no surrogate models".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Input(format!("beta must be nonnegative, got {beta}")));
    }
    let queries: Vec<Vec<f64>> = xs.iter().map(|x| joint_input(x, theta)).collect();
    let root = beta.sqrt();
    let mut out = vec![Vec::with_capacity(models.len()); xs.len()];
    for model in models {
        for (row, post) in out.iter_mut().zip(model.predict_batch(&queries)?) {
            row.push(-post.mean + root * post.std_dev());
        }
    }
    Ok(out)
}

/// Everything fixed while scoring candidates for one task in one round.
#[derive(Debug, Clone, Copy)]
pub struct AcquisitionContext<'a> {
    pub models: &'a [GpModel],
    pub theta: &'a [f64],
    pub lambda: &'a Preference,
    pub beta: f64,
    pub reference: &'a [f64],
}

impl AcquisitionContext<'_> {
    fn check(&self) -> Result<()> {
        let m = self.models.len();
        if m == 0 || self.lambda.len() != m || self.reference.len() != m {
            return Err(Error::Shape(format!(
                "{m} models, preference of length {}, reference of length {}",
                self.lambda.len(),
                self.reference.len()
            )));
        }
        Ok(())
    }

    pub fn scores(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check()?;
        Ok(ucb_batch(self.models, xs, self.theta, self.beta)?
            .iter()
            .map(|a| scalarize_ucb(self.lambda, a, self.reference))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    pub x: Vec<f64>,
    pub score: f64,
}

/// First index of the largest score.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Best of a uniform pool plus `seeds` (previously evaluated points), after
/// coordinate hill climbing from the top few pool members.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    ctx: &AcquisitionContext<'_>,
    dim: usize,
    seeds: &[Vec<f64>],
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<AcquisitionResult> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::Input("decision dimension must be positive".into()));
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != dim) {
        return Err(Error::Shape(format!("seed point of length {} in a {dim}-dimensional space", s.len())));
    }
    let mut pool: Vec<Vec<f64>> = (0..cfg.pool_size).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    pool.extend(seeds.iter().map(|s| s.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<f64>>()));
    let scores = ctx.scores(&pool)?;
    let best = argmax(&scores);
    let mut result = AcquisitionResult { x: pool[best].clone(), score: scores[best] };
    if cfg.local_refinement_steps == 0 || cfg.refine_top == 0 {
        return Ok(result);
    }

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut climbers: Vec<(Vec<f64>, f64, f64)> = order
        .iter()
        .take(cfg.refine_top)
        .map(|&i| (pool[i].clone(), scores[i], cfg.refinement_step_size))
        .collect();
    for _ in 0..cfg.local_refinement_steps {
        let mut proposals = Vec::with_capacity(2 * climbers.len());
        for (x, _, step) in &climbers {
            let j = rng.random_range(0..dim);
            for sign in [1.0, -1.0] {
                let mut p = x.clone();
                p[j] = (p[j] + sign * *step).clamp(0.0, 1.0);
                proposals.push(p);
            }
        }
        let proposal_scores = ctx.scores(&proposals)?;
        for (c, (x, score, step)) in climbers.iter_mut().enumerate() {
            let (up, down) = (proposal_scores[2 * c], proposal_scores[2 * c + 1]);
            let (cand, s) = if up >= down { (2 * c, up) } else { (2 * c + 1, down) };
            if s > *score {
                *x = proposals[cand].clone();
                *score = s;
            } else {
                *step *= 0.5;
            }
        }
    }
    for (x, score, _) in climbers {
        if score > result.score {
            result = AcquisitionResult { x, score };
        }
    }
    Ok(result)
}

/// Index and score of the best pool member; ties go to the lowest index.
pub fn select_from_pool(ctx: &AcquisitionContext<'_>, pool: &[Vec<f64>]) -> Result<(usize, f64)> {
    if pool.is_empty() {
        return Err(Error::Input("cannot select from an empty pool".into()));
    }
    let scores = ctx.scores(pool)?;
    let best = argmax(&scores);
    Ok((best, scores[best]))
}
