//! Hypervolume, regret estimators, and information-gain diagnostics.

mod hypervolume;
mod information;
mod regret;

pub use hypervolume::{hypervolume, nondominated, FrontApproximation};
pub use information::{
    conditional_information_gain, information_gain, mig_report, gain_bound_check, MigPair, MigReport, Regularizer,
    GainCheckConfig, GainCheckReport, GainCheckRow,
};
pub use regret::{bayes_regret, best_front_score, cumulative_regret, per_round_regret, TrajectoryStep};
