//! Small dense linear-algebra helpers shared by the GP and the information-gain
//! computations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-2;

/// Lower Cholesky factor of `a + jitter·I`, escalating jitter from 0 through
/// 1e-8, 1e-7, …, 1e-2. Returns the factor and the jitter that was needed.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if let Some(l) = a.clone().cholesky() {
        return Ok((l.unpack(), 0.0));
    }
    let n = a.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(l) = shifted.cholesky() {
            return Ok((l.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    let min_diag = (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
    Err(Error::Numerical(format!(
        "Cholesky failed for {n}x{n} matrix after jitter up to {JITTER_MAX:e} (min diagonal {min_diag:e})"
    )))
}

/// Inverse of a lower-triangular matrix by recursive 2x2 blocking, so the
/// bulk of the work goes through matrix products.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    if n <= 64 {
        return l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    }
    let h = n / 2;
    let a_inv = lower_triangular_inverse(&l.view((0, 0), (h, h)).into_owned());
    let c_inv = lower_triangular_inverse(&l.view((h, h), (n - h, n - h)).into_owned());
    let b = l.view((h, 0), (n - h, h));
    let lower_left = -(&c_inv * b) * &a_inv;
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&a_inv);
    out.view_mut((h, h), (n - h, n - h)).copy_from(&c_inv);
    out.view_mut((h, 0), (n - h, h)).copy_from(&lower_left);
    out
}

/// `2·Σ log L_ii`, the log-determinant of `L·Lᵀ`.
pub fn logdet_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Solves `L·Lᵀ·x = b`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("nonsingular Cholesky factor");
    l.transpose().solve_upper_triangular(&y).expect("nonsingular Cholesky factor")
}
