//! Randomized row mixing and uniform row sampling.
//!
//! The smoothing transform is `F D`: random signs followed by the orthonormal
//! DCT-2. The sampler `S` picks `c` rows uniformly with replacement and scales
//! them by `sqrt(m / c)`, so that `E[S^T S] = I_m`.

mod dct;
mod rng;

pub use dct::{dct2_apply, dct2_transpose_apply, Dct2};
pub use rng::{mix_seed, SeededRng};

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, EPS};
use crate::error::{Error, Result};

/// `m` independent random signs.
pub fn random_sign_diagonal(m: usize, rng: &mut SeededRng) -> Vec<f64> {
    assert!(m >= 1);
    (0..m)
        .map(|_| if rng.coin() { 1.0 } else { -1.0 })
        .collect()
}

/// Row indices drawn uniformly with replacement from `0..m`, plus the
/// `sqrt(m / c)` scaling. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub m: usize,
    pub indices: Vec<usize>,
    pub scale: f64,
}

impl SampleSet {
    /// Wraps an explicit index list; used for full or forced sampling.
    pub fn from_indices(m: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("sample needs at least one row".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k >= m) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for m = {m}"
            )));
        }
        let scale = (m as f64 / indices.len() as f64).sqrt();
        Ok(Self { m, indices, scale })
    }

    pub fn c(&self) -> usize {
        self.indices.len()
    }

    /// `S x` for a matrix with `m` rows.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.m);
        let mut out = DenseMatrix::zeros(self.c(), x.cols());
        for j in 0..x.cols() {
            let src = x.col(j);
            for (dst, &k) in out.col_mut(j).iter_mut().zip(&self.indices) {
                *dst = self.scale * src[k];
            }
        }
        out
    }
}

pub fn sample_rows(m: usize, c: usize, rng: &mut SeededRng) -> SampleSet {
    assert!(m >= 1 && c >= 1);
    let indices = (0..c).map(|_| rng.below(m)).collect();
    SampleSet {
        m,
        indices,
        scale: (m as f64 / c as f64).sqrt(),
    }
}

/// The full sketching operator `S F D`, with its random parts stored so the
/// exact same operator can be applied again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchOperator {
    pub signs: Vec<f64>,
    pub sample: SampleSet,
}

impl SketchOperator {
    pub fn draw(m: usize, c: usize, rng: &mut SeededRng) -> Self {
        let signs = random_sign_diagonal(m, rng);
        let sample = sample_rows(m, c, rng);
        Self { signs, sample }
    }

    pub fn m(&self) -> usize {
        self.signs.len()
    }

    pub fn c(&self) -> usize {
        self.sample.c()
    }

    /// `F D x` without sampling.
    pub fn smooth(&self, x: &DenseMatrix) -> DenseMatrix {
        smooth_with_signs(&self.signs, x)
    }

    /// `S F D x`.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        self.sample.apply(&self.smooth(x))
    }
}

fn smooth_with_signs(signs: &[f64], x: &DenseMatrix) -> DenseMatrix {
    assert_eq!(x.rows(), signs.len());
    let dct = Dct2::new(x.rows());
    let mut out = x.clone();
    for j in 0..out.cols() {
        let col = out.col_mut(j);
        col.iter_mut().zip(signs).for_each(|(v, s)| *v *= s);
        dct.forward(col);
    }
    out
}

/// Draws `F D` and `S` from `rng` and returns `S F D a`.
pub fn smooth_and_sample(a: &DenseMatrix, c: usize, rng: &mut SeededRng) -> DenseMatrix {
    SketchOperator::draw(a.rows(), c, rng).apply(a)
}

/// Largest squared row norm of `F D q` for a fresh sign draw.
pub fn coherence(q: &DenseMatrix, rng: &mut SeededRng) -> Result<f64> {
    let defect = q
        .transpose_matmul(q)
        .sub(&DenseMatrix::identity(q.cols()))
        .frob_norm();
    if defect > 1e-8 {
        return Err(Error::NotOrthonormal(defect));
    }
    let signs = random_sign_diagonal(q.rows(), rng);
    Ok(max_row_norm_sq(&smooth_with_signs(&signs, q)))
}

pub(crate) fn max_row_norm_sq(x: &DenseMatrix) -> f64 {
    let mut sums = vec![0.0; x.rows()];
    for col in x.columns() {
        for (s, v) in sums.iter_mut().zip(col) {
            *s += v * v;
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

/// Smallest `c >= n` with `c >= 2 m mu (1 + eps/3) ln(n/delta) / eps^2`.
pub fn sample_count(m: usize, n: usize, mu: f64, epsilon: f64, delta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} not in (0, 1)")));
    }
    if m == 0 || n == 0 || n > m {
        return Err(Error::InvalidArgument(format!("need 1 <= n <= m, got m={m} n={n}")));
    }
    let floor = n as f64 / m as f64;
    // Estimated coherence can undershoot n/m by rounding only.
    if !(mu >= floor * (1.0 - 1e3 * EPS) && mu <= 1.0 + 1e3 * EPS) {
        return Err(Error::InvalidArgument(format!(
            "coherence {mu} outside [{floor}, 1]"
        )));
    }
    let bound = 2.0 * m as f64 * mu * (1.0 + epsilon / 3.0) * (n as f64 / delta).ln()
        / (epsilon * epsilon);
    Ok((bound.ceil() as usize).max(n))
}
