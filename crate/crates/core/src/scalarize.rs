//! Preference vectors and the hypervolume scalarization
//! `s_λ(y) = (min_m max(0, (z_m − y_m)/λ_m))^M`.
//!
//! Objective vectors are in minimization convention; larger scores are better.
//! Averaging `max_{y∈Y} s_λ(y)` over λ uniform on the positive unit sphere and
//! multiplying by [`hv_scalarization_constant`] gives the hypervolume of `Y`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A direction on the positive orthant of the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Preference(Vec<f64>);

impl Preference {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Input(format!("preference components must be positive, got {components:?}")));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("preference must have unit norm, got {norm}")));
        }
        Ok(Self(components))
    }

    /// Normalizes a positive direction onto the sphere.
    pub fn from_direction(direction: &[f64]) -> Result<Self> {
        let norm = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Input(format!("cannot normalize direction {direction:?}")));
        }
        Self::new(direction.iter().map(|c| c / norm).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Preference {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Preference> for Vec<f64> {
    fn from(p: Preference) -> Self {
        p.0
    }
}

/// Reference point `z` in minimization space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint(pub Vec<f64>);

impl ReferencePoint {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Uniform draw from the positive orthant of the unit sphere.
pub fn sample_preference<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Preference {
    assert!(m >= 1, "preference dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
        if v.iter().all(|&c| c > 0.0) {
            if let Ok(p) = Preference::from_direction(&v) {
                return p;
            }
        }
    }
}

pub fn hv_scalarize(lambda: &Preference, y: &[f64], z: &[f64]) -> f64 {
    debug_assert_eq!(lambda.len(), y.len());
    debug_assert_eq!(lambda.len(), z.len());
    let gap = lambda
        .0
        .iter()
        .zip(y)
        .zip(z)
        .map(|((l, yi), zi)| ((zi - yi) / l).max(0.0))
        .fold(f64::INFINITY, f64::min);
    gap.powi(lambda.len() as i32)
}

/// Checked variant of [`hv_scalarize`].
pub fn try_hv_scalarize(lambda: &Preference, y: &[f64], z: &[f64]) -> Result<f64> {
    check_len("objective vector", lambda.len(), y.len())?;
    check_len("reference point", lambda.len(), z.len())?;
    Ok(hv_scalarize(lambda, y, z))
}

/// Scores a maximization-space UCB vector `α` by scalarizing `−α`.
pub fn scalarize_ucb(lambda: &Preference, ucb: &[f64], z: &[f64]) -> f64 {
    let y: Vec<f64> = ucb.iter().map(|a| -a).collect();
    hv_scalarize(lambda, &y, z)
}

/// `π^{M/2} / (2^M Γ(M/2 + 1))`: the positive-orthant share of the unit ball volume.
pub fn hv_scalarization_constant(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    PI.powf(half) / (2f64.powi(m as i32) * gamma_half_integer(half + 1.0))
}

/// Γ at a positive integer or half-integer.
fn gamma_half_integer(x: f64) -> f64 {
    let mut acc = 1.0;
    let mut v = x;
    while v > 1.0 + 1e-12 {
        v -= 1.0;
        acc *= v;
    }
    if (v - 0.5).abs() < 1e-12 {
        acc * PI.sqrt()
    } else {
        acc
    }
}

/// Deterministic, roughly uniform set of `count` preferences: evenly spaced
/// angles for two objectives, a golden-angle lattice on the positive octant
/// for three, and normalized Halton points otherwise.
pub fn preference_grid(m: usize, count: usize) -> Vec<Preference> {
    assert!(m >= 1 && count >= 1);
    match m {
        1 => vec![Preference(vec![1.0]); count],
        2 => (0..count)
            .map(|i| {
                let a = (i as f64 + 0.5) / count as f64 * PI / 2.0;
                Preference::from_direction(&[a.cos(), a.sin()]).expect("positive direction")
            })
            .collect(),
        3 => {
            let golden = (5f64.sqrt() - 1.0) / 2.0;
            (0..count)
                .map(|i| {
                    let h = 1.0 - (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - h * h).sqrt();
                    let phi = ((i as f64 + 0.5) * golden).fract() * PI / 2.0;
                    Preference::from_direction(&[r * phi.cos(), r * phi.sin(), h]).expect("positive direction")
                })
                .collect()
        }
        _ => {
            const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            (0..count)
                .map(|i| {
                    let dir: Vec<f64> = (0..m).map(|j| 0.05 + radical_inverse(i as u64 + 1, PRIMES[j % PRIMES.len()])).collect();
                    Preference::from_direction(&dir).expect("positive direction")
                })
                .collect()
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn one_objective_preference_is_one() {
        let mut r = rng::stream(0, &[]);
        for _ in 0..10 {
            assert_eq!(sample_preference(1, &mut r).as_slice(), &[1.0]);
        }
    }

    #[test]
    fn samples_are_positive_unit_vectors() {
        let mut r = rng::stream(1, &[]);
        for m in 1..5 {
            for _ in 0..200 {
                let p = sample_preference(m, &mut r);
                assert!(p.as_slice().iter().all(|&c| c > 0.0));
                let norm: f64 = p.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_objective_mean_angle() {
        let mut r = rng::stream(2, &[]);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let p = sample_preference(2, &mut r);
                p.as_slice()[1].atan2(p.as_slice()[0])
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - PI / 4.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn scalarization_examples() {
        let one = Preference::new(vec![1.0]).unwrap();
        assert_eq!(hv_scalarize(&one, &[0.25], &[1.0]), 0.75);
        let diag = Preference::from_direction(&[1.0, 1.0]).unwrap();
        assert_eq!(hv_scalarize(&diag, &[1.0, 1.0], &[1.0, 1.0]), 0.0);
        let v = hv_scalarize(&diag, &[0.5, 0.2], &[1.0, 1.0]);
        assert!((v - 0.5).abs() < 1e-12);
        // beyond the reference in one objective
        assert_eq!(hv_scalarize(&diag, &[1.2, 0.0], &[1.0, 1.0]), 0.0);
        assert!(try_hv_scalarize(&diag, &[0.1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ucb_scalarization_identity() {
        let mut r = rng::stream(3, &[]);
        let lambda = sample_preference(3, &mut r);
        let z = vec![1.0, 2.0, 0.5];
        let neg: Vec<f64> = z.iter().map(|v: &f64| -v).collect();
        assert_eq!(scalarize_ucb(&lambda, &neg, &z), 0.0);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| r.random_range(-3.0..1.0)).collect();
            let y: Vec<f64> = a.iter().map(|v| -v).collect();
            assert_eq!(scalarize_ucb(&lambda, &a, &z), hv_scalarize(&lambda, &y, &z));
            let mut b = a.clone();
            b[r.random_range(0..3)] += r.random_range(0.0..1.0);
            assert!(scalarize_ucb(&lambda, &b, &z) >= scalarize_ucb(&lambda, &a, &z));
        }
    }

    #[test]
    fn constants() {
        assert!((hv_scalarization_constant(1) - 1.0).abs() < 1e-15);
        assert!((hv_scalarization_constant(2) - PI / 4.0).abs() < 1e-15);
        assert!((hv_scalarization_constant(3) - PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn grids_are_valid_preferences() {
        for m in 1..=5 {
            let grid = preference_grid(m, 16);
            assert_eq!(grid.len(), 16);
            for p in &grid {
                assert!(Preference::new(p.as_slice().to_vec()).is_ok());
            }
        }
        assert_eq!(preference_grid(2, 16), preference_grid(2, 16));
    }

    #[test]
    fn serde_validates() {
        let p: Preference = serde_json::from_str("[0.6, 0.8]").unwrap();
        assert_eq!(p.as_slice(), &[0.6, 0.8]);
        assert!(serde_json::from_str::<Preference>("[0.6, 0.6]").is_err());
    }
}
