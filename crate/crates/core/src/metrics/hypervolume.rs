use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective vectors (minimization) together with the reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontApproximation {
    pub points: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

impl FrontApproximation {
    pub fn hypervolume(&self) -> Result<f64> {
        hypervolume(&self.points, &self.reference)
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the nondominated points. Exact duplicates keep their first copy.
pub fn nondominated(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, q)| dominates(q, &points[i]) || (j < i && *q == points[i]))
        })
        .collect()
}

/// Lebesgue measure of the region dominated by `points` and bounded by
/// `reference`. Supports one to three objectives.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let m = reference.len();
    if !(1..=3).contains(&m) {
        return Err(Error::Capability(format!("hypervolume supports 1 to 3 objectives, got {m}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != m) {
        return Err(Error::Shape(format!("point of length {} against a {m}-objective reference", p.len())));
    }
    if points.iter().flatten().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::Input("hypervolume inputs must be finite".into()));
    }
    let inside: Vec<&[f64]> =
        points.iter().filter(|p| p.iter().zip(reference).all(|(y, z)| y < z)).map(|p| p.as_slice()).collect();
    if inside.is_empty() {
        return Ok(0.0);
    }
    Ok(match m {
        1 => reference[0] - inside.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        2 => hv2(inside.iter().map(|p| (p[0], p[1])).collect(), reference[0], reference[1]),
        _ => hv3(inside, reference),
    })
}

fn hv2(mut pts: Vec<(f64, f64)>, z0: f64, z1: f64) -> f64 {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut level = z1;
    let mut area = 0.0;
    for (x, y) in pts {
        if y < level {
            area += (z0 - x) * (level - y);
            level = y;
        }
    }
    area
}

/// Slices along the third objective; each slab's cross-section is a 2-D
/// hypervolume of the points already below it.
fn hv3(mut pts: Vec<&[f64]>, z: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    for i in 0..pts.len() {
        let top = if i + 1 < pts.len() { pts[i + 1][2] } else { z[2] };
        let depth = top - pts[i][2];
        if depth > 0.0 {
            let slice: Vec<(f64, f64)> = pts[..=i].iter().map(|p| (p[0], p[1])).collect();
            volume += hv2(slice, z[0], z[1]) * depth;
        }
    }
    volume
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle() {
        assert_eq!(hypervolume(&[vec![0.5, 0.5]], &[1.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn three_point_staircase() {
        let pts = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.8, 0.2]];
        let hv = hypervolume(&pts, &[1.0, 1.0]).unwrap();
        // 0.16 + 0.25 + 0.16 − (0.10 + 0.10 + 0.04) + 0.04
        assert!((hv - 0.37).abs() < 1e-12, "{hv}");
    }

    #[test]
    fn dominated_and_outside_points() {
        let base = vec![vec![0.2, 0.6], vec![0.6, 0.1]];
        let hv = hypervolume(&base, &[1.0, 1.0]).unwrap();
        let mut more = base.clone();
        more.push(vec![0.7, 0.7]);
        more.push(vec![1.5, 0.0]);
        more.push(vec![1.0, 0.0]);
        assert_eq!(hypervolume(&more, &[1.0, 1.0]).unwrap(), hv);
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[vec![2.0, 2.0]], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cube_and_union_in_three_objectives() {
        assert!((hypervolume(&[vec![0.5; 3]], &[1.0; 3]).unwrap() - 0.125).abs() < 1e-15);
        let pts = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        // three 1×0.5×0.5 boxes pairwise overlapping in 0.5³ cubes, all three share one
        let expected = 3.0 * 0.25 - 3.0 * 0.125 + 0.125;
        assert!((hypervolume(&pts, &[1.0; 3]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn one_objective() {
        assert_eq!(hypervolume(&[vec![0.25], vec![0.5]], &[1.0]).unwrap(), 0.75);
    }

    #[test]
    fn errors() {
        assert!(matches!(hypervolume(&[vec![0.1; 4]], &[1.0; 4]), Err(Error::Capability(_))));
        assert!(matches!(hypervolume(&[vec![0.1; 3]], &[1.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn nondominated_filter() {
        let pts = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.6, 0.6], vec![0.5, 0.5]];
        assert_eq!(nondominated(&pts), vec![0, 1]);
    }
}
