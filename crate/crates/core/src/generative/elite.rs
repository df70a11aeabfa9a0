use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalarize::{hv_scalarize, preference_grid, Preference};

/// Evaluated solutions of one task, with the scalarization reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSolutions {
    pub theta: Vec<f64>,
    pub reference: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub objectives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteRecord {
    pub x: Vec<f64>,
    pub lambda: Preference,
    pub theta: Vec<f64>,
    pub task: usize,
}

impl EliteRecord {
    /// `c = (λ, θ)`.
    pub fn conditioning(&self) -> Vec<f64> {
        self.lambda.as_slice().iter().chain(&self.theta).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EliteDataset {
    pub records: Vec<EliteRecord>,
}

impl EliteDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Number kept out of `n` at `q` percent: `⌈q·n/100⌉`.
pub fn elite_count(q: f64, n: usize) -> usize {
    let v = q * n as f64 / 100.0;
    // guards against 10·70/100 landing a hair above 7
    ((v - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// For every grid preference and task, the top `q` percent of that task's
/// solutions by scalarized score. Ties fall to the smaller objective sum,
/// then to the earlier solution.
pub fn build_elite_dataset(tasks: &[TaskSolutions], grid_size: usize, q: f64) -> Result<EliteDataset> {
    if tasks.iter().all(|t| t.xs.is_empty()) {
        return Err(Error::Input("elite extraction from an empty archive".into()));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::Input(format!("elite percentage must lie in (0, 100], got {q}")));
    }
    if grid_size == 0 {
        return Err(Error::Input("preference grid must be nonempty".into()));
    }
    let m = tasks.iter().find(|t| !t.objectives.is_empty()).map(|t| t.objectives[0].len()).unwrap_or(0);
    for t in tasks {
        if t.xs.len() != t.objectives.len() || t.reference.len() != m || t.objectives.iter().any(|f| f.len() != m) {
            return Err(Error::Shape("inconsistent task solution lengths".into()));
        }
    }
    let grid = preference_grid(m, grid_size);
    let mut records = Vec::new();
    for lambda in &grid {
        for (k, task) in tasks.iter().enumerate() {
            let scores: Vec<f64> = task.objectives.iter().map(|f| hv_scalarize(lambda, f, &task.reference)).collect();
            let sums: Vec<f64> = task.objectives.iter().map(|f| f.iter().sum()).collect();
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(sums[a].total_cmp(&sums[b])).then(a.cmp(&b)));
            for &i in order.iter().take(elite_count(q, scores.len())) {
                records.push(EliteRecord { x: task.xs[i].clone(), lambda: lambda.clone(), theta: task.theta.clone(), task: k });
            }
        }
    }
    Ok(EliteDataset { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_task(n: usize, seed: u64) -> TaskSolutions {
        let mut r = rng::stream(seed, &[]);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random(), r.random()]).collect();
        let objectives = xs.iter().map(|x| vec![x[0], 1.0 - x[0] * x[1]]).collect();
        TaskSolutions { theta: vec![0.9], reference: vec![1.5, 1.5], xs, objectives }
    }

    #[test]
    fn keep_everything_at_q100() {
        let tasks = vec![random_task(5, 1), random_task(7, 2)];
        let ds = build_elite_dataset(&tasks, 16, 100.0).unwrap();
        assert_eq!(ds.len(), 16 * 12);
    }

    #[test]
    fn ten_percent_of_seventy_is_seven() {
        assert_eq!(elite_count(10.0, 70), 7);
        assert_eq!(elite_count(10.0, 71), 8);
        let ds = build_elite_dataset(&[random_task(70, 3)], 16, 10.0).unwrap();
        assert_eq!(ds.len(), 16 * 7);
    }

    #[test]
    fn dominating_solution_ranks_first() {
        let task = TaskSolutions {
            theta: vec![1.0],
            reference: vec![1.0, 1.0],
            xs: vec![vec![0.0], vec![1.0]],
            objectives: vec![vec![0.9, 0.9], vec![0.5, 0.9]],
        };
        let ds = build_elite_dataset(&[task], 16, 50.0).unwrap();
        assert!(ds.records.iter().all(|r| r.x == vec![1.0]));
    }

    #[test]
    fn conditioning_concatenates() {
        let ds = build_elite_dataset(&[random_task(3, 4)], 2, 100.0).unwrap();
        let c = ds.records[0].conditioning();
        assert_eq!(c.len(), 3);
        assert_eq!(c[2], 0.9);
    }

    #[test]
    fn errors() {
        let empty = TaskSolutions { theta: vec![1.0], reference: vec![1.0, 1.0], xs: vec![], objectives: vec![] };
        assert!(build_elite_dataset(&[empty], 16, 10.0).is_err());
        assert!(build_elite_dataset(&[random_task(3, 5)], 16, 0.0).is_err());
    }
}
