//! The randomized triangular preconditioner.
//!
//! `A_s = S F D A` is a `c x n` sketch of `A`; its thin QR gives `R_s`, and
//! `A_p = A R_s^{-1}` is well conditioned with high probability once `c` is a
//! small multiple of `n`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::{axpy, mtx, DenseMatrix, Householder, EPS};
use crate::error::{Error, Result};
use crate::randomize::{SampleSet, SeededRng, SketchOperator};

/// Sampling amount used when none is given.
pub fn default_sample_count(n: usize) -> usize {
    3 * n
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    pub r_s: DenseMatrix,
    pub c: usize,
    pub sketch: SketchOperator,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PreconditionerMeta {
    m: usize,
    n: usize,
    c: usize,
    seed: u64,
    indices: Vec<usize>,
    signs: Vec<i8>,
}

impl Preconditioner {
    /// Sketches `a` with a fresh operator drawn from `rng` and factors the sketch.
    pub fn build(a: &DenseMatrix, c: usize, rng: &mut SeededRng) -> Result<Self> {
        check_sample_count(a, c)?;
        let sketch = SketchOperator::draw(a.rows(), c, rng);
        Self::from_sketch(a, sketch, rng.seed())
    }

    /// `build` with a stream seeded by `seed`.
    pub fn build_seeded(a: &DenseMatrix, c: usize, seed: u64) -> Result<Self> {
        Self::build(a, c, &mut SeededRng::new(seed))
    }

    /// Factors `sketch.apply(a)`.
    pub fn from_sketch(a: &DenseMatrix, sketch: SketchOperator, seed: u64) -> Result<Self> {
        let c = sketch.c();
        check_sample_count(a, c)?;
        if sketch.m() != a.rows() {
            return Err(Error::InvalidDimensions(format!(
                "sketch expects {} rows, matrix has {}",
                sketch.m(),
                a.rows()
            )));
        }
        let a_s = sketch.apply(a);
        let r_s = Householder::factor(&a_s).r();
        check_rank(&r_s)?;
        Ok(Self { r_s, c, sketch, seed })
    }

    /// Wraps a given triangular matrix, e.g. the exact `R` of `A` or the
    /// identity. The sketch metadata is left empty apart from `m`.
    pub fn from_factor(m: usize, r_s: DenseMatrix) -> Result<Self> {
        if !r_s.is_square() || !r_s.is_upper_triangular() {
            return Err(Error::InvalidArgument(
                "preconditioner must be square upper triangular".into(),
            ));
        }
        let n = r_s.rows();
        Ok(Self {
            r_s,
            c: n,
            sketch: SketchOperator {
                signs: vec![1.0; m],
                sample: SampleSet::from_indices(m, (0..n.min(m)).collect())?,
            },
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.r_s.rows()
    }

    pub fn m(&self) -> usize {
        self.sketch.m()
    }

    /// Writes `r_s.mtx` and `preconditioner.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        mtx::save(&self.r_s, dir.join("r_s.mtx"))?;
        let meta = PreconditionerMeta {
            m: self.m(),
            n: self.n(),
            c: self.c,
            seed: self.seed,
            indices: self.sketch.sample.indices.clone(),
            signs: self.sketch.signs.iter().map(|&s| if s > 0.0 { 1 } else { -1 }).collect(),
        };
        fs::write(dir.join("preconditioner.json"), serde_json::to_string(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let r_s = mtx::load(dir.join("r_s.mtx"))?;
        let meta: PreconditionerMeta =
            serde_json::from_str(&fs::read_to_string(dir.join("preconditioner.json"))?)?;
        if r_s.shape() != (meta.n, meta.n) || meta.signs.len() != meta.m || meta.indices.len() != meta.c {
            return Err(Error::InvalidDimensions(format!(
                "preconditioner files in {} disagree with their metadata",
                dir.display()
            )));
        }
        let sketch = SketchOperator {
            signs: meta.signs.iter().map(|&s| f64::from(s)).collect(),
            sample: SampleSet::from_indices(meta.m, meta.indices)?,
        };
        Ok(Self {
            r_s,
            c: meta.c,
            sketch,
            seed: meta.seed,
        })
    }
}

fn check_sample_count(a: &DenseMatrix, c: usize) -> Result<()> {
    if c < a.cols() {
        return Err(Error::InvalidArgument(format!(
            "sample count c = {c} is below n = {}",
            a.cols()
        )));
    }
    Ok(())
}

/// Rejects `R_s` whose smallest diagonal entry is at most `n eps ||R_s||_2`;
/// `||R_s||_2 = ||A_s||_2`.
fn check_rank(r_s: &DenseMatrix) -> Result<()> {
    let n = r_s.rows();
    let min_diag = (0..n).map(|j| r_s[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    let tolerance = n as f64 * EPS * norm_estimate(r_s);
    if !(min_diag > tolerance) {
        return Err(Error::RankDeficientSketch { min_diag, tolerance });
    }
    Ok(())
}

/// Power iteration for `||m||_2`, accurate to a few digits; only used for
/// the rank tolerance.
fn norm_estimate(m: &DenseMatrix) -> f64 {
    let n = m.cols();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut est = 0.0;
    for _ in 0..50 {
        let y = m.matvec(&x);
        let z = m.matvec_transpose(&y);
        let nz = crate::dense::two_norm(&z);
        if nz == 0.0 {
            return 0.0;
        }
        let next = nz.sqrt();
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = zi / nz);
        if (next - est).abs() <= 1e-6 * next {
            return next;
        }
        est = next;
    }
    est
}

/// `A_p = A R_s^{-1}`, one column at a time by forward substitution on
/// `A_p R_s = A`.
pub fn apply(a: &DenseMatrix, pc: &Preconditioner) -> Result<DenseMatrix> {
    right_solve_upper(a, &pc.r_s)
}

/// `X = A R^{-1}` for upper triangular `R`.
pub fn right_solve_upper(a: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    let n = r.rows();
    if !r.is_square() || a.cols() != n {
        return Err(Error::InvalidDimensions(format!(
            "cannot form A R^-1 with A {}x{} and R {}x{}",
            a.rows(),
            a.cols(),
            r.rows(),
            r.cols()
        )));
    }
    if let Some(index) = (0..n).find(|&j| r[(j, j)].abs() < 1e-300) {
        return Err(Error::SingularTriangular { index });
    }
    let mut x = a.clone();
    for j in 0..n {
        let (done, rest) = x.data_mut().split_at_mut(j * a.rows());
        let col = &mut rest[..a.rows()];
        for k in 0..j {
            let rkj = r[(k, j)];
            if rkj != 0.0 {
                axpy(-rkj, &done[k * a.rows()..(k + 1) * a.rows()], col);
            }
        }
        let inv = 1.0 / r[(j, j)];
        col.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{cond2, thin_qr};
    use crate::problem::{generate, haar_orthogonal};

    #[test]
    fn exact_r_gives_orthonormal_columns() {
        let p = generate(80, 10, 1e6, 0.0, 1).unwrap();
        let qr = thin_qr(&p.a);
        let pc = Preconditioner::from_factor(80, qr.r).unwrap();
        let ap = apply(&p.a, &pc).unwrap();
        assert!((cond2(&ap).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn identity_preconditioner_is_a_no_op() {
        let p = generate(30, 4, 10.0, 0.0, 2).unwrap();
        let pc = Preconditioner::from_factor(30, DenseMatrix::identity(4)).unwrap();
        assert_eq!(apply(&p.a, &pc).unwrap(), p.a);
    }

    #[test]
    fn multiply_back_reconstructs() {
        let p = generate(200, 20, 1e8, 0.0, 3).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 60, 30).unwrap();
        let ap = apply(&p.a, &pc).unwrap();
        let back = ap.matmul(&pc.r_s);
        assert!(back.sub(&p.a).frob_norm() <= 1e-10 * p.a.frob_norm());
        assert!(pc.r_s.is_upper_triangular());
        assert_eq!(pc.c, 60);
    }

    #[test]
    fn orthonormal_input_is_well_conditioned() {
        let (m, n) = (512, 16);
        let mut good = 0;
        for seed in 0..40 {
            let q = haar_orthogonal(m, n, &mut SeededRng::new(1000 + seed));
            let pc = Preconditioner::build_seeded(&q, 3 * n, seed).unwrap();
            let k = cond2(&apply(&q, &pc).unwrap()).unwrap();
            if k <= 10.0 {
                good += 1;
            }
        }
        assert!(good >= 38, "{good}/40");
    }

    #[test]
    fn rejects_undersampling_and_rank_loss() {
        let p = generate(40, 5, 10.0, 0.0, 4).unwrap();
        assert!(matches!(
            Preconditioner::build_seeded(&p.a, 4, 0),
            Err(Error::InvalidArgument(_))
        ));
        let mut a = p.a.clone();
        let c0 = a.col(0).to_vec();
        a.col_mut(1).copy_from_slice(&c0);
        assert!(matches!(
            Preconditioner::build_seeded(&a, 15, 0),
            Err(Error::RankDeficientSketch { .. })
        ));
    }

    #[test]
    fn same_seed_same_preconditioner() {
        let p = generate(64, 6, 1e3, 0.0, 5).unwrap();
        let a = Preconditioner::build_seeded(&p.a, 18, 9).unwrap();
        let b = Preconditioner::build_seeded(&p.a, 18, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = generate(50, 5, 1e4, 0.0, 6).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 15, 11).unwrap();
        pc.save(dir.path()).unwrap();
        let back = Preconditioner::load(dir.path()).unwrap();
        assert_eq!(pc, back);
        let again = Preconditioner::from_sketch(&p.a, back.sketch.clone(), back.seed).unwrap();
        assert_eq!(again.r_s, pc.r_s);
    }

    #[test]
    fn norm_estimate_close_to_spectral_norm() {
        let r = crate::problem::triangular_with_cond(30, 1e6, &mut SeededRng::new(12)).unwrap();
        let r = r.scaled(3.5);
        assert!((norm_estimate(&r) / 3.5 - 1.0).abs() < 1e-3);
    }
}
