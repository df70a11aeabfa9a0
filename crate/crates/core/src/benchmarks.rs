//! Parametric DTLZ problems evaluated at the power-transformed point `x^θ`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A parametric multi-objective problem over `[0,1]^D × Θ`.
pub trait Problem {
    fn name(&self) -> &str;
    fn decision_dim(&self) -> usize;
    fn task_dim(&self) -> usize;
    fn num_objectives(&self) -> usize;
    /// Lower and upper corners of Θ.
    fn task_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;
    /// Fixed reference point for hypervolume reporting.
    fn reference_point(&self) -> Vec<f64>;
    fn analytic_front(&self, _theta: &[f64], _n: usize) -> Result<Vec<Vec<f64>>> {
        Err(Error::Capability(format!("{} has no analytic front", self.name())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dtlz1,
    Dtlz2,
    Dtlz3,
    /// Listed for reference only; evaluation needs an external simulator.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub family: Family,
    pub d: usize,
    pub v: usize,
    pub m: usize,
    pub theta_low: f64,
    pub theta_high: f64,
}

impl Benchmark {
    pub fn dtlz(family: Family, d: usize, m: usize) -> Result<Self> {
        let name = match family {
            Family::Dtlz1 => "dtlz1",
            Family::Dtlz2 => "dtlz2",
            Family::Dtlz3 => "dtlz3",
            Family::External => return Err(Error::Input("not a DTLZ family".into())),
        };
        if !(2..=3).contains(&m) || d < m {
            return Err(Error::Input(format!("DTLZ needs M in {{2,3}} and D >= M, got D={d}, M={m}")));
        }
        Ok(Self { name: name.into(), family, d, v: 1, m, theta_low: 0.8, theta_high: 1.0 })
    }

    fn external(name: &str, d: usize, v: usize, m: usize) -> Self {
        Self { name: name.into(), family: Family::External, d, v, m, theta_low: 0.0, theta_high: 1.0 }
    }

    fn check_domain(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        check_len("decision vector", self.d, x.len())?;
        check_len("task parameter", self.v, theta.len())?;
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("decision coordinate {bad} outside [0, 1]")));
        }
        if let Some(bad) = theta.iter().find(|t| !(self.theta_low..=self.theta_high).contains(*t)) {
            return Err(Error::Input(format!(
                "task parameter {bad} outside [{}, {}]",
                self.theta_low, self.theta_high
            )));
        }
        Ok(())
    }
}

/// Benchmarks addressable by name. DTLZ entries use D=8, V=1, M=2.
pub fn registry() -> Vec<Benchmark> {
    vec![
        Benchmark::dtlz(Family::Dtlz1, 8, 2).expect("valid"),
        Benchmark::dtlz(Family::Dtlz2, 8, 2).expect("valid"),
        Benchmark::dtlz(Family::Dtlz3, 8, 2).expect("valid"),
        Benchmark::external("lamp", 9, 1, 3),
        Benchmark::external("solar", 9, 1, 2),
        Benchmark::external("magnetic", 3, 2, 3),
        Benchmark::external("uav", 12, 2, 2),
    ]
}

pub fn by_name(name: &str) -> Result<Benchmark> {
    let key = name.to_ascii_lowercase().replace(['-', '_'], "");
    registry()
        .into_iter()
        .find(|b| b.name == key)
        .ok_or_else(|| Error::Input(format!("unknown benchmark '{name}'")))
}

fn dtlz1_g(tail: &[f64]) -> f64 {
    let s: f64 = tail.iter().map(|&v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos()).sum();
    100.0 * (tail.len() as f64 + s)
}

fn dtlz2_g(tail: &[f64]) -> f64 {
    tail.iter().map(|&v| (v - 0.5).powi(2)).sum()
}

fn linear_front(pos: &[f64], g: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let mut f = 0.5 * (1.0 + g);
            for p in &pos[..m - 1 - i] {
                f *= p;
            }
            if i > 0 {
                f *= 1.0 - pos[m - 1 - i];
            }
            f
        })
        .collect()
}

fn spherical_front(pos: &[f64], g: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let mut f = 1.0 + g;
            for p in &pos[..m - 1 - i] {
                f *= (p * PI / 2.0).cos();
            }
            if i > 0 {
                f *= (pos[m - 1 - i] * PI / 2.0).sin();
            }
            f
        })
        .collect()
}

impl Problem for Benchmark {
    fn name(&self) -> &str {
        &self.name
    }

    fn decision_dim(&self) -> usize {
        self.d
    }

    fn task_dim(&self) -> usize {
        self.v
    }

    fn num_objectives(&self) -> usize {
        self.m
    }

    fn task_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![self.theta_low; self.v], vec![self.theta_high; self.v])
    }

    fn evaluate(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if self.family == Family::External {
            return Err(Error::Capability(format!("{} requires an external simulator", self.name)));
        }
        self.check_domain(x, theta)?;
        let xt: Vec<f64> = x.iter().map(|&v| v.powf(theta[0])).collect();
        let (pos, tail) = xt.split_at(self.m - 1);
        Ok(match self.family {
            Family::Dtlz1 => linear_front(pos, dtlz1_g(tail), self.m),
            Family::Dtlz2 => spherical_front(pos, dtlz2_g(tail), self.m),
            Family::Dtlz3 => spherical_front(pos, dtlz1_g(tail), self.m),
            Family::External => unreachable!(),
        })
    }

    fn reference_point(&self) -> Vec<f64> {
        match self.family {
            Family::Dtlz1 => vec![500.0; self.m],
            _ => vec![2.0; self.m],
        }
    }

    /// Uniform discretization of the two-objective front. The power transform
    /// leaves the front unchanged since `0.5^{1/θ}` stays inside `[0, 1]`.
    fn analytic_front(&self, _theta: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        if self.m != 2 || self.family == Family::External {
            return Err(Error::Capability(format!("no analytic front for {} with M={}", self.name, self.m)));
        }
        let n = n.max(2);
        Ok((0..n)
            .map(|i| {
                let u = i as f64 / (n - 1) as f64;
                match self.family {
                    Family::Dtlz1 => vec![0.5 * u, 0.5 - 0.5 * u],
                    _ => {
                        let t = u * PI / 2.0;
                        vec![t.cos(), t.sin()]
                    }
                }
            })
            .collect())
    }
}

/// Task parameters θ_1..θ_K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample(pub Vec<Vec<f64>>);

pub fn sample_tasks<P: Problem + ?Sized, R: Rng + ?Sized>(problem: &P, k: usize, rng: &mut R) -> TaskSample {
    let (lo, hi) = problem.task_bounds();
    TaskSample(
        (0..k)
            .map(|_| lo.iter().zip(&hi).map(|(&l, &h)| l + (h - l) * rng.random::<f64>()).collect())
            .collect(),
    )
}

/// Wraps a problem and counts calls to `evaluate`.
pub struct CountingProblem<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P: Problem> CountingProblem<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Problem> Problem for CountingProblem<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn decision_dim(&self) -> usize {
        self.inner.decision_dim()
    }
    fn task_dim(&self) -> usize {
        self.inner.task_dim()
    }
    fn num_objectives(&self) -> usize {
        self.inner.num_objectives()
    }
    fn task_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.task_bounds()
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x, theta)
    }
    fn reference_point(&self) -> Vec<f64> {
        self.inner.reference_point()
    }
    fn analytic_front(&self, theta: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        self.inner.analytic_front(theta, n)
    }
}
