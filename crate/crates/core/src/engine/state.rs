use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use crate::acquisition::{beta, maximize_acquisition, select_from_pool, AcquisitionContext};
use crate::benchmarks::Problem;
use crate::error::{Error, Result};
use crate::generative::{build_elite_dataset, ConditionalGenerator, EliteDataset, TaskSolutions};
use crate::gp::{fit_with, train_hyperparameters, GpModel, Hyperparameters, Observation};
use crate::kernels::CompositeKernel;
use crate::metrics::hypervolume;
use crate::rng::{self, label};
use crate::scalarize::{sample_preference, Preference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Initial,
    Acquisition,
    Generative,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Initial => "initial",
            Mode::Acquisition => "acquisition",
            Mode::Generative => "generative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(Mode::Initial),
            "acquisition" => Ok(Mode::Acquisition),
            "generative" => Ok(Mode::Generative),
            _ => Err(Error::Input(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    pub round: usize,
    /// `None` for the initial design.
    pub lambda: Option<Preference>,
    pub mode: Mode,
}

/// Event counts kept for audits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub evaluations: u64,
    pub gp_fits: u64,
    pub hyper_trainings: u64,
    pub generator_trainings: u64,
    pub generative_rounds: u64,
    pub fallback_rounds: u64,
}

/// Surrogates are grouped: one group per task for single-task runs, a single
/// shared group for task-aware runs. Each group holds one GP per objective.
#[derive(Debug, Clone)]
pub struct RunState {
    pub seed: u64,
    pub tasks: Vec<Vec<f64>>,
    pub archives: Vec<Vec<EvaluationRecord>>,
    /// Scalarization reference point per task.
    pub references: Vec<Vec<f64>>,
    pub round: usize,
    pub task_aware: bool,
    pub hyper: Vec<Vec<Hyperparameters>>,
    pub models: Vec<Vec<GpModel>>,
    pub generator: Option<ConditionalGenerator>,
    /// Hypervolume of each task's archive after each round, starting at round 0.
    pub hv_history: Vec<Vec<f64>>,
    pub hv_reference: Vec<f64>,
    pub log: Vec<String>,
    pub counters: Counters,
    decision_dim: usize,
    num_objectives: usize,
}

fn margin(nadir: f64, ideal: f64) -> f64 {
    let span = nadir - ideal;
    if span > 0.0 {
        0.1 * span
    } else {
        0.1 * nadir.abs().max(1.0)
    }
}

impl RunState {
    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn num_objectives(&self) -> usize {
        self.num_objectives
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Models used to score candidates for task `k`.
    pub fn models_for(&self, k: usize) -> &[GpModel] {
        if self.task_aware {
            &self.models[0]
        } else {
            &self.models[k]
        }
    }

    /// Task input appended to decision vectors for task `k`.
    pub fn model_theta(&self, k: usize) -> &[f64] {
        if self.task_aware {
            &self.tasks[k]
        } else {
            &[]
        }
    }

    pub fn task_solutions(&self) -> Vec<TaskSolutions> {
        self.archives
            .iter()
            .enumerate()
            .map(|(k, a)| TaskSolutions {
                theta: self.tasks[k].clone(),
                reference: self.references[k].clone(),
                xs: a.iter().map(|r| r.x.clone()).collect(),
                objectives: a.iter().map(|r| r.f.clone()).collect(),
            })
            .collect()
    }

    pub fn elites(&self, cfg: &EngineConfig) -> Result<EliteDataset> {
        build_elite_dataset(&self.task_solutions(), cfg.preference_grid, cfg.elite_percent)
    }

    fn record(&mut self, problem: &dyn Problem, k: usize, x: Vec<f64>, round: usize, lambda: Option<Preference>, mode: Mode) -> Result<()> {
        let f = problem.evaluate(&x, &self.tasks[k])?;
        self.counters.evaluations += 1;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("objective values {f:?} at {x:?}")));
        }
        let theta = self.tasks[k].clone();
        self.archives[k].push(EvaluationRecord { x, theta, f, round, lambda, mode });
        self.update_reference(k);
        Ok(())
    }

    /// Recomputes `z_k` only in objectives where an observation has reached it.
    fn update_reference(&mut self, k: usize) {
        let archive = &self.archives[k];
        for m in 0..self.num_objectives {
            let nadir = archive.iter().map(|r| r.f[m]).fold(f64::NEG_INFINITY, f64::max);
            let ideal = archive.iter().map(|r| r.f[m]).fold(f64::INFINITY, f64::min);
            let z = &mut self.references[k][m];
            if !z.is_finite() || nadir >= *z {
                *z = nadir + margin(nadir, ideal);
            }
        }
    }

    fn observations(&self, group: usize, m: usize) -> Vec<Observation> {
        let tasks: Vec<usize> = if self.task_aware { (0..self.num_tasks()).collect() } else { vec![group] };
        tasks
            .into_iter()
            .flat_map(|k| {
                self.archives[k].iter().map(move |r| {
                    let input = if self.task_aware { r.x.iter().chain(&r.theta).copied().collect() } else { r.x.clone() };
                    Observation::new(input, r.f[m])
                })
            })
            .collect()
    }

    /// Refits every surrogate; hyperparameters are re-optimized when `retune`.
    fn refit(&mut self, cfg: &EngineConfig, retune: bool) -> Result<()> {
        let groups = if self.task_aware { 1 } else { self.num_tasks() };
        let mut models = Vec::with_capacity(groups);
        for g in 0..groups {
            let mut row = Vec::with_capacity(self.num_objectives);
            for m in 0..self.num_objectives {
                let obs = self.observations(g, m);
                if retune && !cfg.hyper.fixed {
                    let outcome =
                        train_hyperparameters(&obs, &self.hyper[g][m], cfg.hyper.train_steps, cfg.hyper.learning_rate)?;
                    self.hyper[g][m] = outcome.hyper;
                    self.counters.hyper_trainings += 1;
                }
                row.push(fit_with(&obs, &self.hyper[g][m])?);
                self.counters.gp_fits += 1;
            }
            models.push(row);
        }
        self.models = models;
        Ok(())
    }

    fn push_hypervolumes(&mut self) -> Result<()> {
        for k in 0..self.num_tasks() {
            let points: Vec<Vec<f64>> = self.archives[k].iter().map(|r| r.f.clone()).collect();
            let hv = hypervolume(&points, &self.hv_reference)?;
            self.hv_history[k].push(hv);
        }
        Ok(())
    }

    fn finish_round(&mut self, cfg: &EngineConfig, t: usize) -> Result<()> {
        let retune = cfg.hyper.retune_every > 0 && t.is_multiple_of(cfg.hyper.retune_every);
        self.refit(cfg, retune)?;
        self.push_hypervolumes()?;
        self.round = t;
        Ok(())
    }

    fn round_preference(&self, t: usize) -> Preference {
        sample_preference(self.num_objectives, &mut rng::stream(self.seed, &[label::PREFERENCE, t as u64]))
    }

    fn acquisition_round(&mut self, problem: &dyn Problem, cfg: &EngineConfig, t: usize, lambda: &Preference) -> Result<()> {
        let b = beta(t, self.decision_dim, &cfg.acquisition);
        for k in 0..self.num_tasks() {
            let seeds: Vec<Vec<f64>> = self.archives[k].iter().map(|r| r.x.clone()).collect();
            let ctx = AcquisitionContext {
                models: self.models_for(k),
                theta: self.model_theta(k),
                lambda,
                beta: b,
                reference: &self.references[k],
            };
            let mut r = rng::stream(self.seed, &[label::ACQUISITION, t as u64, k as u64]);
            let best = maximize_acquisition(&ctx, self.decision_dim, &seeds, &cfg.acquisition, &mut r)?;
            self.record(problem, k, best.x, t, Some(lambda.clone()), Mode::Acquisition)?;
        }
        Ok(())
    }

    fn require_layout(&self, task_aware: bool) -> Result<()> {
        if self.task_aware != task_aware {
            let want = if task_aware { "task-aware" } else { "single-task" };
            return Err(Error::State(format!("this step needs {want} surrogates")));
        }
        Ok(())
    }

    fn train_generator(&mut self, cfg: &EngineConfig, t: usize, slot: u64) -> Result<bool> {
        let kind = cfg
            .method
            .generator()
            .ok_or_else(|| Error::State(format!("method {} has no generator", cfg.method)))?;
        let elites = self.elites(cfg)?;
        if elites.len() < 2 {
            self.log.push(format!("round {t}: only {} elite records, generator not trained", elites.len()));
            return Ok(false);
        }
        let mut r = rng::stream(self.seed, &[label::GENERATIVE_TRAIN, t as u64, slot]);
        let (generator, report) = ConditionalGenerator::train(kind, &elites, &cfg.generator, &mut r)?;
        self.log.push(format!(
            "round {t}: trained {kind:?} generator on {} elites, loss {} -> {}",
            elites.len(),
            report.initial_loss,
            report.final_loss
        ));
        self.generator = Some(generator);
        self.counters.generator_trainings += 1;
        Ok(true)
    }
}

/// Evaluates `n_init` uniform points per task and fits the surrogates.
pub fn initialize(problem: &dyn Problem, tasks: Vec<Vec<f64>>, cfg: &EngineConfig, seed: u64) -> Result<RunState> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::Input("at least one task is required".into()));
    }
    let (d, m, v) = (problem.decision_dim(), problem.num_objectives(), problem.task_dim());
    if let Some(t) = tasks.iter().find(|t| t.len() != v) {
        return Err(Error::Shape(format!("task parameter of length {} for a problem with V={v}", t.len())));
    }
    let hv_reference = cfg.reference_point.clone().unwrap_or_else(|| problem.reference_point());
    if hv_reference.len() != m {
        return Err(Error::Shape(format!("reference point of length {} for {m} objectives", hv_reference.len())));
    }
    let task_aware = cfg.method.task_aware();
    let groups = if task_aware { 1 } else { tasks.len() };
    let kernel = CompositeKernel::default_for(if task_aware { v } else { 0 });
    let hyper = Hyperparameters::new(kernel, cfg.hyper.initial_noise)?;
    let k = tasks.len();
    let mut state = RunState {
        seed,
        archives: vec![Vec::new(); k],
        references: vec![vec![f64::NAN; m]; k],
        tasks,
        round: 0,
        task_aware,
        hyper: vec![vec![hyper; m]; groups],
        models: Vec::new(),
        generator: None,
        hv_history: vec![Vec::new(); k],
        hv_reference,
        log: Vec::new(),
        counters: Counters::default(),
        decision_dim: d,
        num_objectives: m,
    };
    for task in 0..k {
        let mut r = rng::stream(seed, &[label::INIT, task as u64]);
        for _ in 0..cfg.n_init {
            let x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            state.record(problem, task, x, 0, None, Mode::Initial)?;
        }
    }
    state.refit(cfg, true)?;
    state.push_hypervolumes()?;
    Ok(state)
}

/// One round with independent per-task GPs.
pub fn step_st_mobo(state: &mut RunState, problem: &dyn Problem, cfg: &EngineConfig) -> Result<()> {
    state.require_layout(false)?;
    let t = state.round + 1;
    let lambda = state.round_preference(t);
    state.acquisition_round(problem, cfg, t, &lambda)?;
    state.finish_round(cfg, t)
}

/// One round with the shared task-aware GPs.
pub fn step_pmt_mobo(state: &mut RunState, problem: &dyn Problem, cfg: &EngineConfig) -> Result<()> {
    state.require_layout(true)?;
    let t = state.round + 1;
    let lambda = state.round_preference(t);
    state.acquisition_round(problem, cfg, t, &lambda)?;
    state.finish_round(cfg, t)
}

/// One round where each task's point is the best of `n_gen` generator samples.
/// The generator is trained from the archive when missing and retrained on
/// fresh elites afterwards. Without enough elites the round falls back to
/// acquisition.
pub fn step_generative(state: &mut RunState, problem: &dyn Problem, cfg: &EngineConfig) -> Result<()> {
    state.require_layout(true)?;
    let t = state.round + 1;
    let lambda = state.round_preference(t);
    if state.generator.is_none() && !state.train_generator(cfg, t, 0)? {
        state.log.push(format!("round {t}: falling back to acquisition"));
        state.counters.fallback_rounds += 1;
        state.acquisition_round(problem, cfg, t, &lambda)?;
        return state.finish_round(cfg, t);
    }
    let b = beta(t, state.decision_dim, &cfg.acquisition);
    for k in 0..state.num_tasks() {
        let c: Vec<f64> = lambda.as_slice().iter().chain(&state.tasks[k]).copied().collect();
        let mut r = rng::stream(state.seed, &[label::GENERATIVE_SAMPLE, t as u64, k as u64]);
        let pool = state.generator.as_ref().expect("generator present").sample(&c, cfg.n_gen, &mut r)?;
        let ctx = AcquisitionContext {
            models: state.models_for(k),
            theta: state.model_theta(k),
            lambda: &lambda,
            beta: b,
            reference: &state.references[k],
        };
        let (idx, _) = select_from_pool(&ctx, &pool)?;
        let x = pool[idx].clone();
        state.record(problem, k, x, t, Some(lambda.clone()), Mode::Generative)?;
    }
    state.counters.generative_rounds += 1;
    state.finish_round(cfg, t)?;
    state.train_generator(cfg, t, 1)?;
    Ok(())
}
