//! Scalarized regret against a dense discretization of the analytic front.
//!
//! Regret for one preference is `max_front s_λ − attained s_λ`, so it is
//! nonnegative up to discretization error and zero for Pareto-optimal points
//! aligned with their preference.

use rand::Rng;

use crate::benchmarks::Problem;
use crate::error::{Error, Result};
use crate::scalarize::{hv_scalarize, sample_preference, Preference};

const FRONT_POINTS: usize = 10_000;

/// One optimization round: the preference used and the objectives attained.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub lambda: Preference,
    pub objectives: Vec<f64>,
}

/// Largest scalarized score over a discretized front, refined exactly on the
/// polyline segments adjacent to the best vertex.
pub fn best_front_score(front: &[Vec<f64>], lambda: &Preference, z: &[f64]) -> f64 {
    let scores: Vec<f64> = front.iter().map(|y| hv_scalarize(lambda, y, z)).collect();
    let Some(best) = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])) else {
        return f64::NEG_INFINITY;
    };
    let mut value = scores[best];
    for (a, b) in [(best.wrapping_sub(1), best), (best, best + 1)] {
        if a < front.len() && b < front.len() {
            value = value.max(best_on_segment(&front[a], &front[b], lambda, z));
        }
    }
    value
}

/// Each gap `(z_m − y_m(a))/λ_m` is linear in the segment parameter, so the
/// maximum of their minimum sits at an endpoint or at a pairwise crossing.
fn best_on_segment(p: &[f64], q: &[f64], lambda: &Preference, z: &[f64]) -> f64 {
    let l = lambda.as_slice();
    let lines: Vec<(f64, f64)> = (0..p.len()).map(|m| ((z[m] - p[m]) / l[m], (p[m] - q[m]) / l[m])).collect();
    let mut candidates = vec![0.0, 1.0];
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let slope = lines[i].1 - lines[j].1;
            if slope != 0.0 {
                let a = (lines[j].0 - lines[i].0) / slope;
                if (0.0..=1.0).contains(&a) {
                    candidates.push(a);
                }
            }
        }
    }
    candidates
        .into_iter()
        .map(|a| {
            let y: Vec<f64> = p.iter().zip(q).map(|(u, v)| u + a * (v - u)).collect();
            hv_scalarize(lambda, &y, z)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_objectives(m: usize, y: &[f64]) -> Result<()> {
    if y.len() != m {
        return Err(Error::Shape(format!("objective vector of length {} for {m} objectives", y.len())));
    }
    Ok(())
}

pub fn per_round_regret<P: Problem + ?Sized>(
    trajectory: &[TrajectoryStep],
    problem: &P,
    theta: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let front = problem.analytic_front(theta, FRONT_POINTS)?;
    let m = problem.num_objectives();
    trajectory
        .iter()
        .map(|step| {
            check_objectives(m, &step.objectives)?;
            Ok(best_front_score(&front, &step.lambda, z) - hv_scalarize(&step.lambda, &step.objectives, z))
        })
        .collect()
}

pub fn cumulative_regret<P: Problem + ?Sized>(
    trajectory: &[TrajectoryStep],
    problem: &P,
    theta: &[f64],
    z: &[f64],
) -> Result<f64> {
    Ok(per_round_regret(trajectory, problem, theta, z)?.iter().sum())
}

/// Monte-Carlo Bayes regret of a set of attained objective vectors.
pub fn bayes_regret<P: Problem + ?Sized, R: Rng + ?Sized>(
    objectives: &[Vec<f64>],
    problem: &P,
    theta: &[f64],
    z: &[f64],
    n_pref: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_pref == 0 {
        return Err(Error::Input("bayes regret needs at least one preference".into()));
    }
    if objectives.is_empty() {
        return Err(Error::Input("bayes regret of an empty solution set".into()));
    }
    let m = problem.num_objectives();
    for y in objectives {
        check_objectives(m, y)?;
    }
    let front = problem.analytic_front(theta, FRONT_POINTS)?;
    let mut total = 0.0;
    for _ in 0..n_pref {
        let lambda = sample_preference(m, rng);
        let attained = objectives.iter().map(|y| hv_scalarize(&lambda, y, z)).fold(f64::NEG_INFINITY, f64::max);
        total += best_front_score(&front, &lambda, z) - attained;
    }
    Ok(total / n_pref as f64)
}
