//! The optimization loop: initialization, ST/PMT acquisition rounds,
//! generative rounds, full runs, and inverse-model evaluation.

pub mod artifacts;
pub mod config;
pub mod inverse;
pub mod run;
pub mod state;

pub use artifacts::{read_hv_curve, read_inverse_model, write_partial_run, write_run_dir, HvRow, RunManifest};
pub use config::{EngineConfig, HyperConfig, Method};
pub use inverse::{
    evaluate_inverse, evaluate_inverse_on, inverse_query, mean_std, unseen_tasks, InverseEvaluation, InverseModel,
    InverseSampler, InverseTaskResult, UniformSampler, UntrainedSampler,
};
pub use run::{advance, round_mode, run, RunArtifacts, RunFailure};
pub use state::{initialize, step_generative, step_pmt_mobo, step_st_mobo, Counters, EvaluationRecord, Mode, RunState};
