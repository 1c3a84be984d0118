use super::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Pivots smaller than this are treated as exact zeros.
const TINY_PIVOT: f64 = 1e-300;

/// Back substitution for `r x = rhs` with `r` upper triangular; `rhs` may
/// have several columns.
pub fn solve_upper_triangular(r: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    let n = check_square(r, "solve_upper_triangular")?;
    check_rhs(n, rhs)?;
    if let Some(index) = (0..n).find(|&j| r[(j, j)].abs() < TINY_PIVOT) {
        return Err(Error::SingularTriangular { index });
    }
    let mut x = rhs.clone();
    for c in 0..rhs.cols() {
        back_substitute(r, x.col_mut(c));
    }
    Ok(x)
}

/// In-place `x <- r^{-1} x`, failing on an effectively zero diagonal.
pub fn back_substitute_checked(r: &DenseMatrix, x: &mut [f64]) -> Result<()> {
    let n = check_square(r, "back substitution")?;
    if x.len() != n {
        return Err(Error::InvalidDimensions(format!(
            "vector has {} entries, system has {n}",
            x.len()
        )));
    }
    if let Some(index) = (0..n).find(|&j| r[(j, j)].abs() < TINY_PIVOT) {
        return Err(Error::SingularTriangular { index });
    }
    back_substitute(r, x);
    Ok(())
}

/// In-place `x <- r^{-1} x`; the caller guarantees a nonsingular diagonal.
pub(crate) fn back_substitute(r: &DenseMatrix, x: &mut [f64]) {
    let n = r.rows();
    for j in (0..n).rev() {
        let xj = x[j] / r[(j, j)];
        x[j] = xj;
        if xj != 0.0 {
            axpy(-xj, &r.col(j)[..j], &mut x[..j]);
        }
    }
}

/// In-place `x <- r^{-T} x` for upper triangular `r`.
pub(crate) fn forward_substitute_transposed(r: &DenseMatrix, x: &mut [f64]) {
    let n = r.rows();
    for j in 0..n {
        let s = dot(&r.col(j)[..j], &x[..j]);
        x[j] = (x[j] - s) / r[(j, j)];
    }
}

fn check_square(m: &DenseMatrix, what: &str) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::InvalidDimensions(format!(
            "{what} needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.rows())
}

fn check_rhs(n: usize, rhs: &DenseMatrix) -> Result<()> {
    if rhs.rows() != n {
        return Err(Error::InvalidDimensions(format!(
            "right-hand side has {} rows, system has {n}",
            rhs.rows()
        )));
    }
    Ok(())
}

/// LU factorization with partial pivoting, `P m = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    packed: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        let n = check_square(m, "LU")?;
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let col = &a.col(k)[k..];
            let (off, piv) = col
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(bi, bv), (i, v)| {
                    if v.abs() > bv {
                        (i, v.abs())
                    } else {
                        (bi, bv)
                    }
                });
            if piv < TINY_PIVOT {
                return Err(Error::SingularSystem { index: k });
            }
            let p = k + off;
            if p != k {
                perm.swap(k, p);
                for j in 0..n {
                    let base = j * n;
                    a.data_mut().swap(base + k, base + p);
                }
            }
            let inv = 1.0 / a[(k, k)];
            a.col_mut(k)[k + 1..].iter_mut().for_each(|v| *v *= inv);
            let data = a.data_mut();
            let (head, tail) = data.split_at_mut((k + 1) * n);
            let l = &head[k * n + k + 1..k * n + n];
            for col in tail.chunks_exact_mut(n) {
                let ukj = col[k];
                if ukj != 0.0 {
                    axpy(-ukj, l, &mut col[k + 1..]);
                }
            }
        }
        Ok(Self { packed: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.packed.rows()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // L y = P b, unit diagonal.
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                axpy(-xk, &self.packed.col(k)[k + 1..], &mut x[k + 1..]);
            }
        }
        back_substitute(&self.packed, &mut x);
        b.copy_from_slice(&x);
    }

    pub fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_rhs(self.dim(), rhs)?;
        let mut x = rhs.clone();
        for c in 0..x.cols() {
            self.solve_in_place(x.col_mut(c));
        }
        Ok(x)
    }
}

/// Solves `m x = rhs` by LU with partial pivoting.
pub fn lu_solve(m: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    Lu::factor(m)?.solve(rhs)
}

/// Cholesky factor `g = U^T U` with `U` upper triangular.
#[derive(Debug, Clone)]
pub struct Cholesky {
    u: DenseMatrix,
}

impl Cholesky {
    /// Factors a symmetric matrix; asymmetry above `1e-12` relative is rejected.
    pub fn factor(g: &DenseMatrix) -> Result<Self> {
        let n = check_square(g, "Cholesky")?;
        let asym = g.asymmetry();
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        let mut u = DenseMatrix::zeros(n, n);
        for j in 0..n {
            // Column j of U holds row j of L = U^T, so both dot products below
            // run over contiguous storage.
            for i in 0..j {
                let s = dot(&u.col(i)[..i], &u.col(j)[..i]);
                let v = (g[(i, j)] - s) / u[(i, i)];
                u[(i, j)] = v;
            }
            let s = dot(&u.col(j)[..j], &u.col(j)[..j]);
            let d = g[(j, j)] - s;
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            u[(j, j)] = d.sqrt();
        }
        Ok(Self { u })
    }

    pub fn upper(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        forward_substitute_transposed(&self.u, b);
        back_substitute(&self.u, b);
    }

    pub fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_rhs(self.u.rows(), rhs)?;
        let mut x = rhs.clone();
        for c in 0..x.cols() {
            self.solve_in_place(x.col_mut(c));
        }
        Ok(x)
    }
}

/// Solves the symmetric positive definite system `g x = rhs`.
pub fn cholesky_solve(g: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    Cholesky::factor(g)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecm(v: &[f64]) -> DenseMatrix {
        DenseMatrix::column_vector(v.to_vec()).unwrap()
    }

    fn lcg_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut s = seed;
        DenseMatrix::from_fn(m, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn upper_triangular_identity_and_example() {
        let v = vecm(&[1.0, -2.0, 3.0]);
        assert_eq!(solve_upper_triangular(&DenseMatrix::identity(3), &v).unwrap(), v);
        let r = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 4.0]]).unwrap();
        let x = solve_upper_triangular(&r, &vecm(&[5.0, 8.0])).unwrap();
        assert_eq!(x.data(), &[1.5, 2.0]);
    }

    #[test]
    fn upper_triangular_singular() {
        let r = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_upper_triangular(&r, &vecm(&[1.0, 1.0])),
            Err(Error::SingularTriangular { index: 1 })
        ));
    }

    #[test]
    fn transposed_forward_substitution() {
        let r = DenseMatrix::from_rows(&[&[2.0, 1.0, -1.0], &[0.0, 3.0, 2.0], &[0.0, 0.0, 4.0]])
            .unwrap();
        let b = [1.0, 2.0, 3.0];
        let mut x = b;
        forward_substitute_transposed(&r, &mut x);
        let back = r.transpose().matvec(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn lu_identity_and_permutation() {
        let rhs = vecm(&[7.0, -3.0]);
        assert_eq!(lu_solve(&DenseMatrix::identity(2), &rhs).unwrap(), rhs);
        let p = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(lu_solve(&p, &rhs).unwrap().data(), &[-3.0, 7.0]);
    }

    #[test]
    fn lu_random_residual() {
        let mut m = lcg_matrix(10, 10, 42);
        for i in 0..10 {
            m[(i, i)] += 3.0;
        }
        let rhs = lcg_matrix(10, 1, 7);
        let x = lu_solve(&m, &rhs).unwrap();
        let res = m.matmul(&x).sub(&rhs).frob_norm() / rhs.frob_norm();
        assert!(res <= 1e-12, "residual {res}");
    }

    #[test]
    fn lu_singular() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(
            lu_solve(&m, &vecm(&[1.0, 1.0])),
            Err(Error::SingularSystem { index: 1 })
        ));
    }

    #[test]
    fn cholesky_diagonal_and_identity() {
        let rhs = vecm(&[8.0, 27.0]);
        assert_eq!(cholesky_solve(&DenseMatrix::identity(2), &rhs).unwrap(), rhs);
        let g = DenseMatrix::diagonal(&[4.0, 9.0]);
        assert_eq!(cholesky_solve(&g, &rhs).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn cholesky_matches_lu_on_gram() {
        let b = lcg_matrix(20, 5, 99);
        let g = b.gram();
        let rhs = lcg_matrix(5, 1, 3);
        let xc = cholesky_solve(&g, &rhs).unwrap();
        let xl = lu_solve(&g, &rhs).unwrap();
        assert!(xc.sub(&xl).frob_norm() <= 1e-10 * xl.frob_norm());
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        let g = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(matches!(
            Cholesky::factor(&g),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        let g = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&g), Err(Error::NotSymmetric(_))));
    }
}
