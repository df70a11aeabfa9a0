use super::config::{EngineConfig, Method};
use super::inverse::InverseModel;
use super::state::{initialize, step_generative, step_pmt_mobo, step_st_mobo, Mode, RunState};
use crate::benchmarks::{sample_tasks, Problem};
use crate::error::{Error, Result};
use crate::rng::{self, label};

/// Everything a completed run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub problem: String,
    pub seed: u64,
    pub config: EngineConfig,
    pub state: RunState,
    pub inverse_model: Option<InverseModel>,
}

impl RunArtifacts {
    /// Hypervolume of each task's archive after the last round.
    pub fn final_hypervolumes(&self) -> Vec<f64> {
        self.state.hv_history.iter().map(|h| *h.last().expect("round 0 is always recorded")).collect()
    }

    pub fn rounds_in_mode(&self, mode: Mode) -> usize {
        let mut rounds: Vec<usize> =
            self.state.archives.iter().flatten().filter(|r| r.mode == mode).map(|r| r.round).collect();
        rounds.sort_unstable();
        rounds.dedup();
        rounds.len()
    }
}

/// A failed run: the error and the state reached before it, when any.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Option<Box<RunState>>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run failed: {}", self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Mode of round `t` (counted from 1) for a method.
pub fn round_mode(method: Method, t: usize) -> Mode {
    if method.generator().is_some() && t.is_multiple_of(2) {
        Mode::Generative
    } else {
        Mode::Acquisition
    }
}

pub fn advance(state: &mut RunState, problem: &dyn Problem, cfg: &EngineConfig) -> Result<()> {
    let t = state.round + 1;
    match (cfg.method, round_mode(cfg.method, t)) {
        (Method::StMobo, _) => step_st_mobo(state, problem, cfg),
        (_, Mode::Generative) => step_generative(state, problem, cfg),
        _ => step_pmt_mobo(state, problem, cfg),
    }
}

/// Samples `K` tasks, evaluates the initial design, and runs `T` rounds.
pub fn run(problem: &dyn Problem, cfg: &EngineConfig, seed: u64) -> std::result::Result<RunArtifacts, RunFailure> {
    let fail = |error, partial: Option<&RunState>| RunFailure { error, partial: partial.cloned().map(Box::new) };
    let tasks = sample_tasks(problem, cfg.num_tasks, &mut rng::stream(seed, &[label::TASKS])).0;
    let mut state = initialize(problem, tasks, cfg, seed).map_err(|e| fail(e, None))?;
    for _ in 0..cfg.rounds {
        if let Err(e) = advance(&mut state, problem, cfg) {
            state.log.push(format!("round {}: {e}", state.round + 1));
            return Err(fail(e, Some(&state)));
        }
    }
    let inverse_model = match &state.generator {
        Some(g) => Some(
            InverseModel::new(g.clone(), problem.num_objectives(), problem.task_dim()).map_err(|e| fail(e, Some(&state)))?,
        ),
        None => None,
    };
    Ok(RunArtifacts { problem: problem.name().to_string(), seed, config: cfg.clone(), state, inverse_model })
}
