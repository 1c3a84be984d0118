//! Orthonormal DCT-2 and its transpose, via a length-`m` complex FFT.
//!
//! `F[k, j] = s_k cos(pi k (2j + 1) / (2m))` with `s_0 = sqrt(1/m)` and
//! `s_k = sqrt(2/m)` otherwise, so `F^T F = I`. The FFT route uses Makhoul's
//! even/odd reordering: with `v` the reordered input and `V = fft(v)`,
//! `sum_j x_j cos(pi k (2j+1) / 2m) = Re(exp(-i pi k / 2m) V_k)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dense::DenseMatrix;

/// Precomputed plans and twiddles for one transform length.
pub struct Dct2 {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    twiddles: Vec<Complex<f64>>,
    scale0: f64,
    scale: f64,
}

impl std::fmt::Debug for Dct2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct2").field("len", &self.len).finish()
    }
}

impl Dct2 {
    pub fn new(len: usize) -> Self {
        assert!(len > 0);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let twiddles = (0..len)
            .map(|k| {
                let theta = -std::f64::consts::PI * k as f64 / (2.0 * len as f64);
                Complex::new(theta.cos(), theta.sin())
            })
            .collect();
        let m = len as f64;
        Self {
            len,
            forward,
            inverse,
            twiddles,
            scale0: (1.0 / m).sqrt(),
            scale: (2.0 / m).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `x <- F x`.
    pub fn forward(&self, x: &mut [f64]) {
        let n = self.len;
        assert_eq!(x.len(), n);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let half = n.div_ceil(2);
        for j in 0..half {
            buf[j].re = x[2 * j];
        }
        for j in 0..n / 2 {
            buf[n - 1 - j].re = x[2 * j + 1];
        }
        self.forward.process(&mut buf);
        for k in 0..n {
            let c = (self.twiddles[k] * buf[k]).re;
            x[k] = c * if k == 0 { self.scale0 } else { self.scale };
        }
    }

    /// `x <- F^T x`, the inverse of [`Dct2::forward`].
    pub fn transpose(&self, x: &mut [f64]) {
        let n = self.len;
        assert_eq!(x.len(), n);
        // Undo the orthonormal scaling to recover the plain cosine sums C_k.
        let c: Vec<f64> = (0..n)
            .map(|k| x[k] / if k == 0 { self.scale0 } else { self.scale })
            .collect();
        // V_k = exp(i pi k / 2m) (C_k - i C_{m-k}), with C_m = 0.
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let tail = if k == 0 { 0.0 } else { c[n - k] };
                self.twiddles[k].conj() * Complex::new(c[k], -tail)
            })
            .collect();
        self.inverse.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        let half = n.div_ceil(2);
        for j in 0..half {
            x[2 * j] = buf[j].re * inv_n;
        }
        for j in 0..n / 2 {
            x[2 * j + 1] = buf[n - 1 - j].re * inv_n;
        }
    }

    pub fn forward_columns(&self, m: &mut DenseMatrix) {
        for j in 0..m.cols() {
            self.forward(m.col_mut(j));
        }
    }

    pub fn transpose_columns(&self, m: &mut DenseMatrix) {
        for j in 0..m.cols() {
            self.transpose(m.col_mut(j));
        }
    }
}

/// `F x` applied to every column of `x`.
pub fn dct2_apply(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    Dct2::new(x.rows()).forward_columns(&mut out);
    out
}

/// `F^T x` applied to every column of `x`.
pub fn dct2_transpose_apply(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    Dct2::new(x.rows()).transpose_columns(&mut out);
    out
}
