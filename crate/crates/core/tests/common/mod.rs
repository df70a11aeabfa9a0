//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense GP posterior and log marginal likelihood computed with an LU
/// inverse, independent of the library's Cholesky path. Inputs are `[x, θ]`
/// with `task_ls.len()` trailing task coordinates.
pub struct DenseGp {
    k_inv: DMatrix<f64>,
    alpha: DVector<f64>,
    inputs: Vec<Vec<f64>>,
    ell: f64,
    task_ls: Vec<f64>,
    scale: f64,
    mean: f64,
    std: f64,
    pub mll: f64,
}

pub fn kernel(a: &[f64], b: &[f64], ell: f64, task_ls: &[f64], scale: f64) -> f64 {
    let d = a.len() - task_ls.len();
    let mut s = 0.0;
    for i in 0..d {
        s += (a[i] - b[i]).powi(2) / (ell * ell);
    }
    for (j, l) in task_ls.iter().enumerate() {
        s += (a[d + j] - b[d + j]).powi(2) / (l * l);
    }
    scale * (-0.5 * s).exp()
}

impl DenseGp {
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        ell: f64,
        task_ls: &[f64],
        scale: f64,
        noise: f64,
        standardize: bool,
    ) -> Self {
        let n = inputs.len();
        let (mean, std) = if standardize {
            let m = targets.iter().sum::<f64>() / n as f64;
            let v = targets.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n as f64;
            (m, if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - mean) / std));
        let k = DMatrix::from_fn(n, n, |i, j| {
            kernel(&inputs[i], &inputs[j], ell, task_ls, scale) + if i == j { noise } else { 0.0 }
        });
        let lu = k.clone().lu();
        let k_inv = lu.try_inverse().expect("invertible Gram matrix");
        let alpha = &k_inv * &y;
        let det = k.determinant();
        let mll = -0.5 * y.dot(&alpha) - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Self { k_inv, alpha, inputs: inputs.to_vec(), ell, task_ls: task_ls.to_vec(), scale, mean, std, mll }
    }

    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let kq = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|x| kernel(q, x, self.ell, &self.task_ls, self.scale)),
        );
        let mu = kq.dot(&self.alpha);
        let var = kernel(q, q, self.ell, &self.task_ls, self.scale) - kq.dot(&(&self.k_inv * &kq));
        (mu * self.std + self.mean, var.max(0.0) * self.std * self.std)
    }
}

/// Points scattered around a concave front inside `[0, 1]^m`.
pub fn random_front<R: Rng>(rng: &mut R, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = 0.6 + 0.4 * rng.random::<f64>();
            dir.iter().map(|v| r * v / norm).collect()
        })
        .collect()
}

fn dominates_weakly(p: &[f64], u: &[f64]) -> bool {
    p.iter().zip(u).all(|(a, b)| a <= b)
}

/// Monte-Carlo hypervolume: uniform samples in the box spanned by the
/// componentwise minimum and the reference point.
pub fn mc_hypervolume<R: Rng>(points: &[Vec<f64>], reference: &[f64], samples: usize, rng: &mut R) -> f64 {
    let m = reference.len();
    let inside: Vec<Vec<f64>> =
        points.iter().filter(|p| p.iter().zip(reference).all(|(a, b)| a < b)).cloned().collect();
    if inside.is_empty() {
        return 0.0;
    }
    let lo: Vec<f64> = (0..m).map(|i| inside.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min)).collect();
    let box_volume: f64 = (0..m).map(|i| reference[i] - lo[i]).product();
    let mut front = inside;
    front.sort_by(|a, b| a[0].total_cmp(&b[0]));
    // For two objectives: running minimum of f1 over points sorted by f0.
    let prefix_min: Vec<f64> = front
        .iter()
        .scan(f64::INFINITY, |acc, p| {
            *acc = acc.min(p[1.min(m - 1)]);
            Some(*acc)
        })
        .collect();
    let mut hits = 0usize;
    let mut u = vec![0.0; m];
    for _ in 0..samples {
        for i in 0..m {
            u[i] = lo[i] + (reference[i] - lo[i]) * rng.random::<f64>();
        }
        let hit = match m {
            1 => true,
            2 => {
                let idx = front.partition_point(|p| p[0] <= u[0]);
                idx > 0 && prefix_min[idx - 1] <= u[1]
            }
            _ => front.iter().any(|p| dominates_weakly(p, &u)),
        };
        hits += hit as usize;
    }
    box_volume * hits as f64 / samples as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
