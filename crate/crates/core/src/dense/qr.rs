use super::{axpy, dot, DenseMatrix};

/// Thin QR factors: `q` is `m x n` with orthonormal columns, `r` is `n x n`
/// upper triangular with a nonnegative diagonal.
#[derive(Debug, Clone)]
pub struct ThinQR {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Householder QR in compact form.
///
/// Column `k` below the diagonal holds the reflector `v_k` (with implicit
/// `v_k[0] = 1`); the diagonal and above hold `R`. Reflector signs are chosen
/// so that every diagonal entry of `R` is `+||x||`, which makes the
/// factorization unique for full-rank input.
#[derive(Debug, Clone)]
pub struct Householder {
    packed: DenseMatrix,
    tau: Vec<f64>,
}

impl Householder {
    pub fn factor(a: &DenseMatrix) -> Self {
        let (m, n) = a.shape();
        assert!(m >= n, "thin QR needs rows >= cols, got {m}x{n}");
        let mut packed = a.clone();
        let mut tau = vec![0.0; n];
        for k in 0..n {
            let (t, beta) = {
                let x = &mut packed.col_mut(k)[k..];
                make_reflector(x)
            };
            tau[k] = t;
            if t != 0.0 {
                // Split so the reflector column and trailing columns can be
                // borrowed together.
                let data = packed.data_mut();
                let (head, tail) = data.split_at_mut((k + 1) * m);
                let v = &mut head[k * m + k..k * m + m];
                v[0] = 1.0;
                for col in tail.chunks_exact_mut(m) {
                    let y = &mut col[k..];
                    let w = t * dot(v, y);
                    axpy(-w, v, y);
                }
                v[0] = beta;
            } else {
                packed.col_mut(k)[k] = beta;
            }
        }
        Self { packed, tau }
    }

    pub fn rows(&self) -> usize {
        self.packed.rows()
    }

    pub fn cols(&self) -> usize {
        self.packed.cols()
    }

    pub fn r(&self) -> DenseMatrix {
        let n = self.cols();
        DenseMatrix::from_fn(n, n, |i, j| if i <= j { self.packed[(i, j)] } else { 0.0 })
    }

    pub fn min_abs_diag(&self) -> f64 {
        (0..self.cols())
            .map(|k| self.packed[(k, k)].abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Overwrites `y` (length `m`) with `Q_full^T y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        let m = self.rows();
        assert_eq!(y.len(), m);
        for k in 0..self.cols() {
            self.reflect(k, &mut y[k..]);
        }
    }

    /// Overwrites `y` (length `m`) with `Q_full y`.
    pub fn apply_q(&self, y: &mut [f64]) {
        let m = self.rows();
        assert_eq!(y.len(), m);
        for k in (0..self.cols()).rev() {
            self.reflect(k, &mut y[k..]);
        }
    }

    fn reflect(&self, k: usize, y: &mut [f64]) {
        let t = self.tau[k];
        if t == 0.0 {
            return;
        }
        let v = &self.packed.col(k)[k..];
        // v[0] is implicitly 1; the stored value there is R[k,k].
        let w = t * (y[0] + dot(&v[1..], &y[1..]));
        y[0] -= w;
        axpy(-w, &v[1..], &mut y[1..]);
    }

    /// The explicit `m x n` orthonormal factor.
    pub fn q(&self) -> DenseMatrix {
        let (m, n) = self.packed.shape();
        let mut q = DenseMatrix::eye(m, n);
        for k in (0..n).rev() {
            if self.tau[k] == 0.0 {
                continue;
            }
            for j in k..n {
                self.reflect(k, &mut q.col_mut(j)[k..]);
            }
        }
        q
    }

    pub fn into_thin_qr(self) -> ThinQR {
        ThinQR {
            q: self.q(),
            r: self.r(),
        }
    }
}

/// Computes the reflector for `x` in place (tail of `x` becomes `v[1..]`) and
/// returns `(tau, beta)` with `beta = ||x|| >= 0`.
fn make_reflector(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let sigma = dot(&x[1..], &x[1..]);
    if sigma == 0.0 {
        if alpha >= 0.0 {
            return (0.0, alpha);
        }
        // H = I - 2 e1 e1^T flips the sign.
        return (2.0, -alpha);
    }
    let norm = (alpha * alpha + sigma).sqrt();
    let v0 = if alpha <= 0.0 {
        alpha - norm
    } else {
        -sigma / (alpha + norm)
    };
    let tau = 2.0 * v0 * v0 / (sigma + v0 * v0);
    let inv = 1.0 / v0;
    x[1..].iter_mut().for_each(|v| *v *= inv);
    (tau, norm)
}

/// Thin Householder QR with nonnegative `R` diagonal.
pub fn thin_qr(a: &DenseMatrix) -> ThinQR {
    Householder::factor(a).into_thin_qr()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(m: usize, n: usize, salt: u64) -> DenseMatrix {
        let mut s = salt.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        DenseMatrix::from_fn(m, n, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn orth_defect(q: &DenseMatrix) -> f64 {
        q.transpose_matmul(q).sub(&DenseMatrix::identity(q.cols())).frob_norm()
    }

    #[test]
    fn identity_factors_trivially() {
        let qr = thin_qr(&DenseMatrix::identity(3));
        assert_eq!(qr.q, DenseMatrix::identity(3));
        assert_eq!(qr.r, DenseMatrix::identity(3));
    }

    #[test]
    fn single_column_normalizes() {
        let a = DenseMatrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let qr = thin_qr(&a);
        assert!((qr.r[(0, 0)] - 5.0).abs() < 1e-15);
        assert!((qr.q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((qr.q[(1, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn negative_diagonal_is_flipped() {
        let a = DenseMatrix::from_rows(&[&[-2.0, 1.0], &[0.0, -3.0]]).unwrap();
        let qr = thin_qr(&a);
        assert!(qr.r[(0, 0)] > 0.0 && qr.r[(1, 1)] > 0.0);
        assert!(qr.q.matmul(&qr.r).sub(&a).max_abs() < 1e-15);
    }

    #[test]
    fn random_tall_reconstructs() {
        let a = pseudo_random(20, 5, 3);
        let qr = thin_qr(&a);
        assert!(orth_defect(&qr.q) <= 1e-13);
        assert!(qr.q.matmul(&qr.r).sub(&a).frob_norm() / a.frob_norm() <= 1e-13);
        assert!(qr.r.is_upper_triangular());
        assert!((0..5).all(|k| qr.r[(k, k)] >= 0.0));
    }

    #[test]
    fn compact_apply_matches_explicit_q() {
        let a = pseudo_random(30, 6, 11);
        let h = Householder::factor(&a);
        let q = h.q();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let mut y = b.clone();
        h.apply_qt(&mut y);
        let qtb = q.matvec_transpose(&b);
        for i in 0..6 {
            assert!((y[i] - qtb[i]).abs() < 1e-14);
        }
        h.apply_q(&mut y);
        for i in 0..30 {
            assert!((y[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn square_matrix() {
        let a = pseudo_random(9, 9, 5);
        let qr = thin_qr(&a);
        assert!(orth_defect(&qr.q) <= 1e-13);
        assert!(qr.q.matmul(&qr.r).sub(&a).frob_norm() <= 1e-13 * a.frob_norm());
    }
}
