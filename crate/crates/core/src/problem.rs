//! Synthetic least squares problems with a known minimizer.
//!
//! `A = Q1 R` with Haar `Q1` and a triangular `R` of prescribed condition
//! number and unit norm; `x*` is a random unit vector; the residual
//! `e = b - A x*` is a random direction orthogonal to `range(A)` scaled to
//! norm `eta_r`. Since `||A|| = ||x*|| = 1`, absolute and relative residuals
//! coincide.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::{mtx, DenseMatrix, Householder};
use crate::error::{Error, Result};
use crate::randomize::SeededRng;

const RESIDUAL_ATTEMPTS: usize = 8;

/// `m x n` matrix with orthonormal columns drawn from the Haar distribution:
/// the `Q` factor of a Gaussian matrix, with the `R` diagonal made nonnegative.
pub fn haar_orthogonal(m: usize, n: usize, rng: &mut SeededRng) -> DenseMatrix {
    assert!(m >= n && n >= 1, "haar_orthogonal needs m >= n >= 1");
    let g = DenseMatrix::new(m, n, rng.normals(m * n)).expect("finite normals");
    Householder::factor(&g).q()
}

/// Geometric singular value profile from 1 down to `1/kappa`.
pub fn geometric_spectrum(n: usize, kappa: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|j| kappa.powf(-(j as f64) / (n - 1) as f64))
        .collect()
}

/// Dense upper triangular `R` with singular values `geometric_spectrum(n, kappa)`.
///
/// `R` is the triangular factor of `diag(sigma) V^T` for Haar `V`. That is the
/// same `R` as for `U diag(sigma) V^T` with any orthogonal `U`, but factoring
/// the row-graded product directly keeps the smallest singular values
/// accurate to working precision even at `kappa = 1e12`.
pub fn triangular_with_cond(n: usize, kappa: f64, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa {kappa} must be finite and >= 1")));
    }
    if n == 1 && kappa != 1.0 {
        return Err(Error::InvalidArgument(
            "a 1x1 matrix always has condition number 1".into(),
        ));
    }
    let sigma = geometric_spectrum(n, kappa);
    let v = haar_orthogonal(n, n, rng);
    // diag(sigma) V^T
    let graded = DenseMatrix::from_fn(n, n, |i, j| sigma[i] * v[(j, i)]);
    Ok(Householder::factor(&graded).r())
}

/// Metadata written next to a saved problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub eta_r: f64,
    pub seed: u64,
}

/// A generated instance; see the module docs for the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProblem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub x_star: DenseMatrix,
    pub residual: DenseMatrix,
    pub kappa_target: f64,
    pub eta_r: f64,
    pub seed: u64,
}

/// The residual-independent part of a problem: `A`, `x*` and the unit
/// residual direction. One base per seed serves a whole residual sweep.
#[derive(Debug, Clone)]
pub struct ProblemBase {
    pub a: DenseMatrix,
    pub x_star: DenseMatrix,
    ax_star: DenseMatrix,
    residual_dir: Option<DenseMatrix>,
    pub kappa: f64,
    pub seed: u64,
}

impl ProblemBase {
    pub fn new(m: usize, n: usize, kappa: f64, seed: u64) -> Result<Self> {
        if n == 0 || m <= n {
            return Err(Error::InvalidArgument(format!(
                "need m > n >= 1, got m={m} n={n}"
            )));
        }
        let mut rng = SeededRng::new(seed);
        let q1 = haar_orthogonal(m, n, &mut rng);
        let r = triangular_with_cond(n, kappa, &mut rng)?;
        let a = q1.matmul(&r);

        let x = DenseMatrix::new(n, 1, rng.normals(n))?;
        let x_star = x.scaled(1.0 / x.two_norm_vector());
        let ax_star = a.matmul(&x_star);

        let mut residual_dir = None;
        for _ in 0..RESIDUAL_ATTEMPTS {
            let g = rng.normals(m);
            // (I - Q1 Q1^T) g, projected twice so the result is orthogonal to
            // range(Q1) to working precision.
            let mut e = g;
            for _ in 0..2 {
                let coeff = q1.matvec_transpose(&e);
                let back = q1.matvec(&coeff);
                e.iter_mut().zip(&back).for_each(|(v, w)| *v -= w);
            }
            let norm = crate::dense::two_norm(&e);
            if norm > 1e-150 && norm.is_finite() {
                e.iter_mut().for_each(|v| *v /= norm);
                residual_dir = Some(DenseMatrix::new(m, 1, e)?);
                break;
            }
        }
        Ok(Self {
            a,
            x_star,
            ax_star,
            residual_dir,
            kappa,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// The problem with residual norm `eta_r`.
    pub fn instance(&self, eta_r: f64) -> Result<LeastSquaresProblem> {
        if !(eta_r >= 0.0 && eta_r.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta_r {eta_r} must be >= 0")));
        }
        let m = self.m();
        let residual = if eta_r == 0.0 {
            DenseMatrix::zeros(m, 1)
        } else {
            let dir = self
                .residual_dir
                .as_ref()
                .ok_or(Error::DegenerateResidual {
                    attempts: RESIDUAL_ATTEMPTS,
                })?;
            dir.scaled(eta_r)
        };
        let b = self.ax_star.add(&residual);
        Ok(LeastSquaresProblem {
            a: self.a.clone(),
            b,
            x_star: self.x_star.clone(),
            residual,
            kappa_target: self.kappa,
            eta_r,
            seed: self.seed,
        })
    }
}

/// Builds one problem; equal arguments give bitwise-equal problems.
pub fn generate(m: usize, n: usize, kappa: f64, eta_r: f64, seed: u64) -> Result<LeastSquaresProblem> {
    ProblemBase::new(m, n, kappa, seed)?.instance(eta_r)
}

impl LeastSquaresProblem {
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn meta(&self) -> ProblemMeta {
        ProblemMeta {
            m: self.m(),
            n: self.n(),
            kappa: self.kappa_target,
            eta_r: self.eta_r,
            seed: self.seed,
        }
    }

    /// Writes `a.mtx`, `b.mtx`, `xstar.mtx`, `residual.mtx` and `problem.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        mtx::save(&self.a, dir.join("a.mtx"))?;
        mtx::save(&self.b, dir.join("b.mtx"))?;
        mtx::save(&self.x_star, dir.join("xstar.mtx"))?;
        mtx::save(&self.residual, dir.join("residual.mtx"))?;
        fs::write(
            dir.join("problem.json"),
            serde_json::to_string_pretty(&self.meta())?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ProblemMeta = serde_json::from_str(&fs::read_to_string(dir.join("problem.json"))?)?;
        let a = mtx::load(dir.join("a.mtx"))?;
        let b = mtx::load(dir.join("b.mtx"))?;
        let x_star = mtx::load(dir.join("xstar.mtx"))?;
        let residual = mtx::load(dir.join("residual.mtx"))?;
        if a.shape() != (meta.m, meta.n)
            || b.shape() != (meta.m, 1)
            || x_star.shape() != (meta.n, 1)
            || residual.shape() != (meta.m, 1)
        {
            return Err(Error::InvalidDimensions(format!(
                "problem files in {} disagree with problem.json",
                dir.display()
            )));
        }
        Ok(Self {
            a,
            b,
            x_star,
            residual,
            kappa_target: meta.kappa,
            eta_r: meta.eta_r,
            seed: meta.seed,
        })
    }

    /// Measured deviations from the construction invariants.
    pub fn check(&self) -> ProblemCheck {
        let sv = crate::dense::singular_values(&self.a);
        let cond = sv.condition_number().unwrap_or(f64::INFINITY);
        let res_norm = self.residual.two_norm_vector();
        let at_e = self.a.transpose_matmul(&self.residual).two_norm_vector();
        let rebuilt = self.a.matmul(&self.x_star).add(&self.residual);
        ProblemCheck {
            x_star_norm: self.x_star.two_norm_vector(),
            a_norm: sv.max(),
            cond_rel_error: (cond / self.kappa_target - 1.0).abs(),
            residual_norm: res_norm,
            residual_orthogonality: at_e,
            b_mismatch: rebuilt.sub(&self.b).max_abs(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemCheck {
    pub x_star_norm: f64,
    pub a_norm: f64,
    pub cond_rel_error: f64,
    pub residual_norm: f64,
    pub residual_orthogonality: f64,
    pub b_mismatch: f64,
}

impl ProblemCheck {
    /// The construction invariants at the documented tolerances.
    pub fn holds(&self, eta_r: f64) -> bool {
        let residual_ok = if eta_r == 0.0 {
            self.residual_norm == 0.0
        } else {
            (self.residual_norm / eta_r - 1.0).abs() <= 1e-12
        };
        (self.x_star_norm - 1.0).abs() <= 1e-14
            && (self.a_norm - 1.0).abs() <= 1e-10
            && self.cond_rel_error <= 1e-6
            && residual_ok
            && self.residual_orthogonality <= 1e-12 * eta_r.max(f64::MIN_POSITIVE)
            && self.b_mismatch <= 1e-15
    }
}
