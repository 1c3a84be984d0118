//! Singular values by one-sided Jacobi.
//!
//! Tall inputs are first reduced to their `R` factor. Jacobi then
//! orthogonalizes the columns of `R^T` (the rows of `R`), which converges in a
//! few sweeps and keeps small singular values of row-graded triangular factors
//! accurate to high relative precision.

use super::{dot, DenseMatrix, Householder};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Singular values sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    /// `sigma_1 / sigma_n`, failing when `sigma_n <= 1e-300 sigma_1`.
    pub fn condition_number(&self) -> Result<f64> {
        let (hi, lo) = (self.max(), self.min());
        if lo <= 1e-300 * hi || hi == 0.0 {
            return Err(Error::RankDeficient(if hi == 0.0 { 0.0 } else { lo / hi }));
        }
        Ok(hi / lo)
    }
}

/// Descending singular values; `min(rows, cols)` of them.
pub fn singular_values(m: &DenseMatrix) -> SingularSpectrum {
    if m.rows() < m.cols() {
        return singular_values(&m.transpose());
    }
    let r = Householder::factor(m).r();
    SingularSpectrum::new(jacobi_column_norms(r.transpose()))
}

/// Singular values of a square upper triangular factor, skipping the QR step.
pub fn triangular_singular_values(r: &DenseMatrix) -> SingularSpectrum {
    debug_assert!(r.is_square());
    SingularSpectrum::new(jacobi_column_norms(r.transpose()))
}

/// Two-norm condition number with respect to left inversion.
pub fn cond2(m: &DenseMatrix) -> Result<f64> {
    singular_values(m).condition_number()
}

pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    singular_values(m).max()
}

/// Hestenes one-sided Jacobi: rotates column pairs until all are mutually
/// orthogonal and returns the resulting column norms.
fn jacobi_column_norms(mut g: DenseMatrix) -> Vec<f64> {
    let n = g.cols();
    // Column pairs whose cosine is below sqrt(rows) * eps count as orthogonal;
    // that is the level at which the computed dot product is pure rounding.
    let tol = (g.rows() as f64).sqrt() * super::EPS;
    let mut norms: Vec<f64> = g.columns().map(|c| dot(c, c)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (a, b) = (norms[p], norms[q]);
                if a == 0.0 || b == 0.0 {
                    continue;
                }
                let gamma = dot(g.col(p), g.col(q));
                if gamma.abs() <= tol * (a.sqrt() * b.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (cp, cq) = g.col_pair_mut(p, q);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
                norms[p] = dot(cp, cp);
                norms[q] = dot(cq, cq);
            }
        }
        if !rotated {
            break;
        }
    }
    norms.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(singular_values(&DenseMatrix::identity(4)).values(), &[1.0; 4]);
        let d = DenseMatrix::diagonal(&[1.0, 3.0, 2.0]);
        assert_eq!(singular_values(&d).values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn condition_numbers() {
        let d = DenseMatrix::diagonal(&[10.0, 1.0]);
        assert!((cond2(&d).unwrap() - 10.0).abs() < 1e-14);
        let q = DenseMatrix::eye(5, 2);
        assert_eq!(cond2(&q).unwrap(), 1.0);
        let singular = DenseMatrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(cond2(&singular), Err(Error::RankDeficient(_))));
        assert_eq!(spectral_norm(&DenseMatrix::identity(3)), 1.0);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[1, 1], [0, 1]] has singular values golden ratio and its inverse.
        let m = DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let s = singular_values(&m);
        assert!((s.values()[0] - phi).abs() < 1e-15);
        assert!((s.values()[1] - 1.0 / phi).abs() < 1e-15);
    }

    #[test]
    fn wide_matrix_uses_transpose() {
        let m = DenseMatrix::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 4.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&m).values(), &[4.0, 3.0]);
    }

    #[test]
    fn graded_triangular_keeps_tiny_values() {
        // Rows scaled by 1, 1e-6, 1e-12: tiny values must keep relative accuracy.
        let base = DenseMatrix::from_rows(&[
            &[1.0, 0.5, 0.25],
            &[0.0, 1.0, 0.5],
            &[0.0, 0.0, 1.0],
        ])
        .unwrap();
        let scales = DenseMatrix::diagonal(&[1.0, 1e-6, 1e-12]);
        let r = scales.matmul(&base);
        let s = singular_values(&r);
        let det: f64 = 1e-18;
        let prod: f64 = s.values().iter().product();
        assert!((prod / det - 1.0).abs() < 1e-12);
    }
}
