use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::benchmarks::{by_name, Benchmark, Family};
use crate::engine::{EngineConfig, HyperConfig, Method};
use crate::error::{Error, Result};
use crate::generative::GeneratorConfig;

fn default_method() -> Method {
    Method::PmtMobo
}
fn default_tasks() -> usize {
    8
}
fn default_n_init() -> usize {
    20
}
fn default_rounds() -> usize {
    50
}
fn default_elite_percent() -> f64 {
    10.0
}
fn default_preference_grid() -> usize {
    16
}
fn default_n_gen() -> usize {
    64
}

/// JSON experiment description. Only `benchmark` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_tasks")]
    pub num_tasks: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Number of independent runs; defaults to 20, or to `seeds.len()`.
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default = "default_elite_percent")]
    pub elite_percent: f64,
    /// Run `i` uses `seed + i` unless `seeds` lists them explicitly.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub reference_point: Option<Vec<f64>>,
    #[serde(default = "default_preference_grid")]
    pub preference_grid: usize,
    #[serde(default = "default_n_gen")]
    pub n_gen: usize,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn problem(&self) -> Result<Benchmark> {
        let b = by_name(&self.benchmark)?;
        if b.family == Family::External {
            return Err(Error::Capability(format!("benchmark '{}' requires an external simulator", b.name)));
        }
        Ok(b)
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.runs.unwrap_or(20) as u64).map(|i| self.seed.wrapping_add(i)).collect(),
        }
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            method: self.method,
            num_tasks: self.num_tasks,
            n_init: self.n_init,
            rounds: self.rounds,
            elite_percent: self.elite_percent,
            preference_grid: self.preference_grid,
            n_gen: self.n_gen,
            acquisition: self.acquisition.clone(),
            hyper: self.hyper.clone(),
            generator: self.generator.clone(),
            reference_point: self.reference_point.clone(),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", self.benchmark, self.method)))
    }

    /// Checks everything and fills in derived defaults.
    pub fn resolve(mut self) -> Result<Self> {
        let problem = self.problem()?;
        if self.rounds == 0 {
            return Err(Error::Input("rounds must be positive".into()));
        }
        match (&self.seeds, self.runs) {
            (Some(s), Some(u)) if s.len() != u => {
                return Err(Error::Input(format!("runs = {u} but {} seeds are listed", s.len())));
            }
            (Some(s), _) if s.is_empty() => return Err(Error::Input("seeds must not be empty".into())),
            (Some(s), _) => self.runs = Some(s.len()),
            (None, Some(0)) => return Err(Error::Input("runs must be positive".into())),
            (None, u) => self.runs = Some(u.unwrap_or(20)),
        }
        if let Some(z) = &self.reference_point {
            if z.len() != crate::benchmarks::Problem::num_objectives(&problem) || z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("reference point must be finite with one entry per objective".into()));
            }
        }
        self.engine().validate()?;
        if self.output_dir.is_none() {
            self.output_dir = Some(self.output_dir());
        }
        Ok(self)
    }
}
