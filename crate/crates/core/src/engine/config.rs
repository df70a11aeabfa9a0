use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::error::{Error, Result};
use crate::generative::{GeneratorConfig, GeneratorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    StMobo,
    PmtMobo,
    PmtMoboVae,
    PmtMoboDdpm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::StMobo, Method::PmtMobo, Method::PmtMoboVae, Method::PmtMoboDdpm];

    pub fn name(self) -> &'static str {
        match self {
            Method::StMobo => "st-mobo",
            Method::PmtMobo => "pmt-mobo",
            Method::PmtMoboVae => "pmt-mobo-vae",
            Method::PmtMoboDdpm => "pmt-mobo-ddpm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name.to_ascii_lowercase())
            .ok_or_else(|| Error::Input(format!("unknown method '{name}'")))
    }

    /// Whether one GP per objective is shared by all tasks.
    pub fn task_aware(self) -> bool {
        self != Method::StMobo
    }

    pub fn generator(self) -> Option<GeneratorKind> {
        match self {
            Method::PmtMoboVae => Some(GeneratorKind::Vae),
            Method::PmtMoboDdpm => Some(GeneratorKind::Ddpm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperConfig {
    /// Keep the initial kernel and noise for the whole run.
    pub fixed: bool,
    pub train_steps: usize,
    pub learning_rate: f64,
    /// Hyperparameters are re-optimized at initialization and on rounds
    /// divisible by this; the Cholesky refit happens every round.
    pub retune_every: usize,
    pub initial_noise: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self { fixed: false, train_steps: 50, learning_rate: 0.1, retune_every: 5, initial_noise: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub method: Method,
    pub num_tasks: usize,
    pub n_init: usize,
    pub rounds: usize,
    /// Percentage of each task's solutions kept as elites per preference.
    pub elite_percent: f64,
    pub preference_grid: usize,
    /// Candidates drawn from the generator per task on generative rounds.
    pub n_gen: usize,
    pub acquisition: AcquisitionConfig,
    pub hyper: HyperConfig,
    pub generator: GeneratorConfig,
    /// Hypervolume reference point; defaults to the benchmark's.
    pub reference_point: Option<Vec<f64>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            method: Method::PmtMobo,
            num_tasks: 8,
            n_init: 20,
            rounds: 50,
            elite_percent: 10.0,
            preference_grid: 16,
            n_gen: 64,
            acquisition: AcquisitionConfig::default(),
            hyper: HyperConfig::default(),
            generator: GeneratorConfig::default(),
            reference_point: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_tasks", self.num_tasks),
            ("n_init", self.n_init),
            ("preference_grid", self.preference_grid),
            ("n_gen", self.n_gen),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Input(format!("{name} must be positive")));
        }
        if !(self.elite_percent > 0.0 && self.elite_percent <= 100.0) {
            return Err(Error::Input("elite_percent must lie in (0, 100]".into()));
        }
        if !self.hyper.fixed && (self.hyper.train_steps == 0 || !(self.hyper.learning_rate > 0.0)) {
            return Err(Error::Input("hyperparameter training needs positive steps and learning rate".into()));
        }
        if !(self.hyper.initial_noise > 0.0) {
            return Err(Error::Input("initial_noise must be positive".into()));
        }
        self.acquisition.validate()
    }
}
