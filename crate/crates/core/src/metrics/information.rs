//! Information gain of GP designs, with and without conditioning on other
//! tasks' observations, and a randomized checker for the inequality
//! `γ_joint ≤ γ_single`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CompositeKernel, DecisionKernelParams, TaskKernelParams};
use crate::linalg::cholesky_with_jitter;
use crate::rng;

/// Diagonal term added to the conditioning block before the Schur complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `σ²`, standard Gaussian conditioning on noisy observations.
    NoiseVariance,
    /// `σ⁻²`.
    InverseNoiseVariance,
}

impl Regularizer {
    fn value(self, noise: f64) -> f64 {
        match self {
            Regularizer::NoiseVariance => noise,
            Regularizer::InverseNoiseVariance => 1.0 / noise,
        }
    }
}

fn check_rows(rows: &[Vec<f64>], kernel: &CompositeKernel, what: &str) -> Result<()> {
    let Some(first) = rows.first() else {
        return Ok(());
    };
    if first.len() <= kernel.task_dims() {
        return Err(Error::Shape(format!("{what} rows of length {} leave no decision coordinates", first.len())));
    }
    if rows.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Shape(format!("{what} rows have inconsistent lengths")));
    }
    Ok(())
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::Input(format!("noise variance must be positive, got {noise}")));
    }
    Ok(())
}

/// `½ log det(I + σ⁻² K)` for a covariance block.
fn half_logdet_inner(k: &DMatrix<f64>, noise: f64) -> Result<f64> {
    let n = k.nrows();
    let inner = DMatrix::identity(n, n) + k / noise;
    let (l, _) = cholesky_with_jitter(&inner)?;
    Ok((0..n).map(|i| l[(i, i)].ln()).sum())
}

/// `½ log det(I + σ⁻² K)` over a design of joint `(x ‖ θ)` rows.
pub fn information_gain(design: &[Vec<f64>], kernel: &CompositeKernel, noise: f64) -> Result<f64> {
    if design.is_empty() {
        return Err(Error::Input("information gain of an empty design".into()));
    }
    check_rows(design, kernel, "design")?;
    check_noise(noise)?;
    half_logdet_inner(&kernel.gram_rows(design), noise)
}

/// Information gain of `target` once the observations at `conditioning`
/// have been accounted for: the target block is replaced by its Schur
/// complement `K_tt − K_ctᵀ (K_cc + rI)⁻¹ K_ct`.
pub fn conditional_information_gain(
    target: &[Vec<f64>],
    conditioning: &[Vec<f64>],
    kernel: &CompositeKernel,
    noise: f64,
    regularizer: Regularizer,
) -> Result<f64> {
    if conditioning.is_empty() {
        return information_gain(target, kernel, noise);
    }
    if target.is_empty() {
        return Err(Error::Input("information gain of an empty design".into()));
    }
    check_rows(target, kernel, "target")?;
    check_rows(conditioning, kernel, "conditioning")?;
    if target[0].len() != conditioning[0].len() {
        return Err(Error::Shape("target and conditioning rows differ in length".into()));
    }
    check_noise(noise)?;
    let r = regularizer.value(noise);
    let mut kcc = kernel.gram_rows(conditioning);
    for i in 0..kcc.nrows() {
        kcc[(i, i)] += r;
    }
    let (l, _) = cholesky_with_jitter(&kcc)?;
    let b = kernel.cross_rows(conditioning, target);
    let v = l
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::Numerical("singular conditioning factor".into()))?;
    let mut cond = kernel.gram_rows(target) - v.transpose() * v;
    cond = (&cond + cond.transpose()) * 0.5;
    half_logdet_inner(&cond, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigPair {
    pub objective: usize,
    pub task: usize,
    pub single: f64,
    pub joint: f64,
}

impl MigPair {
    pub fn gap(&self) -> f64 {
        self.single - self.joint
    }
}

/// Per-objective, per-task information gains of a multi-task design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigReport {
    pub pairs: Vec<MigPair>,
    pub designs: Vec<Vec<Vec<f64>>>,
    pub tasks: Vec<Vec<f64>>,
    pub kernels: Vec<CompositeKernel>,
    pub noise: Vec<f64>,
    pub regularizer: Regularizer,
}

fn joint_rows(design: &[Vec<f64>], theta: &[f64]) -> Vec<Vec<f64>> {
    design.iter().map(|x| x.iter().chain(theta).copied().collect()).collect()
}

/// For each objective (one kernel and noise level each) and each task, the
/// gain of that task's design alone and conditioned on every other task.
pub fn mig_report(
    designs: &[Vec<Vec<f64>>],
    tasks: &[Vec<f64>],
    kernels: &[CompositeKernel],
    noise: &[f64],
    regularizer: Regularizer,
) -> Result<MigReport> {
    if designs.len() != tasks.len() || kernels.len() != noise.len() {
        return Err(Error::Shape("designs/tasks or kernels/noise counts differ".into()));
    }
    let rows: Vec<Vec<Vec<f64>>> = designs.iter().zip(tasks).map(|(d, t)| joint_rows(d, t)).collect();
    let mut pairs = Vec::with_capacity(kernels.len() * tasks.len());
    for (m, (kernel, &sigma2)) in kernels.iter().zip(noise).enumerate() {
        for k in 0..tasks.len() {
            let others: Vec<Vec<f64>> =
                rows.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, r)| r.iter().cloned()).collect();
            let single = information_gain(&rows[k], kernel, sigma2)?;
            let joint = conditional_information_gain(&rows[k], &others, kernel, sigma2, regularizer)?;
            pairs.push(MigPair { objective: m, task: k, single, joint });
        }
    }
    Ok(MigReport {
        pairs,
        designs: designs.to_vec(),
        tasks: tasks.to_vec(),
        kernels: kernels.to_vec(),
        noise: noise.to_vec(),
        regularizer,
    })
}

/// Trial grid for [`gain_bound_check`]. Trial `i` uses the `i`-th combination of
/// (tasks, points per task, objectives), cycling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainCheckConfig {
    pub task_counts: Vec<usize>,
    pub points_per_task: Vec<usize>,
    pub objective_counts: Vec<usize>,
    pub decision_dim: usize,
    pub task_dim: usize,
    pub tolerance: f64,
}

impl Default for GainCheckConfig {
    fn default() -> Self {
        Self {
            task_counts: vec![2, 4, 8],
            points_per_task: vec![5, 15],
            objective_counts: vec![2, 3],
            decision_dim: 3,
            task_dim: 1,
            tolerance: 1e-9,
        }
    }
}

impl GainCheckConfig {
    fn validate(&self) -> Result<()> {
        let empty_or_zero = |v: &[usize]| v.is_empty() || v.contains(&0);
        if empty_or_zero(&self.task_counts) || empty_or_zero(&self.points_per_task) || empty_or_zero(&self.objective_counts)
        {
            return Err(Error::Input("trial grid entries must be nonempty and positive".into()));
        }
        if self.decision_dim == 0 {
            return Err(Error::Input("decision dimension must be positive".into()));
        }
        Ok(())
    }

    fn combination(&self, trial: usize) -> (usize, usize, usize) {
        let (a, b, c) = (self.task_counts.len(), self.points_per_task.len(), self.objective_counts.len());
        let i = trial % (a * b * c);
        (self.task_counts[i % a], self.points_per_task[(i / a) % b], self.objective_counts[i / (a * b)])
    }
}

/// One (trial, objective, task) comparison under both regularizer conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCheckRow {
    pub trial: usize,
    pub num_tasks: usize,
    pub points_per_task: usize,
    pub objective: usize,
    pub task: usize,
    pub gamma_single: f64,
    pub gamma_joint: f64,
    pub gap: f64,
    pub gamma_joint_inv: f64,
    pub gap_inv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub rows: Vec<GainCheckRow>,
}

impl GainCheckReport {
    /// Largest `γ_joint − γ_single` over all rows and both conventions, floored at 0.
    pub fn max_violation(&self) -> f64 {
        self.rows.iter().map(|r| (-r.gap).max(-r.gap_inv)).fold(0.0, f64::max)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| -r.gap > self.tolerance || -r.gap_inv > self.tolerance).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn mean_gap(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.gap).sum::<f64>() / self.rows.len() as f64
    }

    pub fn min_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap.min(r.gap_inv)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap.max(r.gap_inv)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "trial",
            "num_tasks",
            "points_per_task",
            "m",
            "k",
            "gamma_single",
            "gamma_joint",
            "gap",
            "gamma_joint_inv",
            "gap_inv",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.trial.to_string(),
                r.num_tasks.to_string(),
                r.points_per_task.to_string(),
                r.objective.to_string(),
                r.task.to_string(),
                r.gamma_single.to_string(),
                r.gamma_joint.to_string(),
                r.gap.to_string(),
                r.gamma_joint_inv.to_string(),
                r.gap_inv.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Random multi-task designs and hyperparameters; every conditional gain is
/// compared with its single-task counterpart under both regularizers.
pub fn gain_bound_check(trials: usize, seed: u64, config: &GainCheckConfig) -> Result<GainCheckReport> {
    if trials == 0 {
        return Err(Error::Input("at least one trial is required".into()));
    }
    config.validate()?;
    let (d, v) = (config.decision_dim, config.task_dim);
    let mut rows = Vec::new();
    for trial in 0..trials {
        let (num_tasks, t, m) = config.combination(trial);
        let mut r = rng::stream(seed, &[trial as u64]);
        let tasks: Vec<Vec<f64>> = (0..num_tasks).map(|_| (0..v).map(|_| r.random::<f64>()).collect()).collect();
        let designs: Vec<Vec<Vec<f64>>> =
            (0..num_tasks).map(|_| (0..t).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect()).collect();
        let mut kernels = Vec::with_capacity(m);
        let mut noise = Vec::with_capacity(m);
        for _ in 0..m {
            let dec = DecisionKernelParams::new(r.random_range(0.1..2.5))?;
            let task = TaskKernelParams::new((0..v).map(|_| log_uniform(&mut r, 0.05, 5.0)).collect())?;
            kernels.push(CompositeKernel::new(dec, task, r.random_range(0.5..2.0))?);
            noise.push(log_uniform(&mut r, 1e-3, 1.0));
        }
        let std = mig_report(&designs, &tasks, &kernels, &noise, Regularizer::NoiseVariance)?;
        let inv = mig_report(&designs, &tasks, &kernels, &noise, Regularizer::InverseNoiseVariance)?;
        for (a, b) in std.pairs.iter().zip(&inv.pairs) {
            rows.push(GainCheckRow {
                trial,
                num_tasks,
                points_per_task: t,
                objective: a.objective,
                task: a.task,
                gamma_single: a.single,
                gamma_joint: a.joint,
                gap: a.gap(),
                gamma_joint_inv: b.joint,
                gap_inv: b.gap(),
            });
        }
    }
    Ok(GainCheckReport { trials, tolerance: config.tolerance, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(task_ls: f64) -> CompositeKernel {
        CompositeKernel::new(DecisionKernelParams::new(0.5).unwrap(), TaskKernelParams::new(vec![task_ls]).unwrap(), 1.0)
            .unwrap()
    }

    #[test]
    fn scalar_case() {
        let k = CompositeKernel::default_for(0);
        let g = information_gain(&[vec![0.3]], &k, 1.0).unwrap();
        assert!((g - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((g - 0.34657).abs() < 1e-5);
    }

    #[test]
    fn duplicated_point_gains_less_than_twice() {
        let k = CompositeKernel::default_for(0);
        let one = information_gain(&[vec![0.3]], &k, 1.0).unwrap();
        let two = information_gain(&[vec![0.3], vec![0.3]], &k, 1.0).unwrap();
        // det [[2,1],[1,2]] = 3
        assert!((two - 0.5 * 3f64.ln()).abs() < 1e-12);
        assert!(two < 2.0 * one);
    }

    #[test]
    fn empty_conditioning_is_exact() {
        let k = kernel(0.7);
        let target = vec![vec![0.1, 0.2, 0.5], vec![0.7, 0.3, 0.5]];
        assert_eq!(
            conditional_information_gain(&target, &[], &k, 0.1, Regularizer::NoiseVariance).unwrap(),
            information_gain(&target, &k, 0.1).unwrap()
        );
    }

    #[test]
    fn single_task_trial_has_zero_gap() {
        let cfg = GainCheckConfig { task_counts: vec![1], ..Default::default() };
        let report = gain_bound_check(1, 3, &cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.gap == 0.0 && r.gap_inv == 0.0));
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn errors() {
        let k = CompositeKernel::default_for(0);
        assert!(information_gain(&[], &k, 1.0).is_err());
        assert!(information_gain(&[vec![0.1]], &k, 0.0).is_err());
        assert!(gain_bound_check(0, 0, &GainCheckConfig::default()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_pair() {
        let cfg = GainCheckConfig { task_counts: vec![3], points_per_task: vec![4], objective_counts: vec![2], ..Default::default() };
        let report = gain_bound_check(2, 11, &cfg).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
    }
}
