//! The four solution paths for `min ||Ax - b||`.
//!
//! Each solver is factored once and can then be applied to many right-hand
//! sides, which is how residual sweeps reuse work across the residual grid.

use serde::{Deserialize, Serialize};

use crate::dense::{
    back_substitute_checked, spectral_norm, two_norm, Cholesky, DenseMatrix, Householder, Lu,
};
use crate::error::{Error, Result};
use crate::preconditioner::{self, Preconditioner};
use crate::problem::LeastSquaresProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Qr,
    Ne,
    Pne,
    Hpne,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Qr, Method::Ne, Method::Pne, Method::Hpne];

    pub fn name(self) -> &'static str {
        match self {
            Method::Qr => "qr",
            Method::Ne => "ne",
            Method::Pne => "pne",
            Method::Hpne => "hpne",
        }
    }

    pub fn needs_preconditioner(self) -> bool {
        matches!(self, Method::Pne | Method::Hpne)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qr" => Ok(Method::Qr),
            "ne" => Ok(Method::Ne),
            "pne" => Ok(Method::Pne),
            "hpne" => Ok(Method::Hpne),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub x_hat: DenseMatrix,
    /// `y_hat = R_s x_hat` as computed by the first PNE step.
    pub y_hat: Option<DenseMatrix>,
    /// `||x_hat - x*|| / ||x_hat||`.
    pub rel_error: f64,
    /// `||b - A x_hat|| / (||A|| ||x_hat||)`.
    pub rel_residual: f64,
    /// `||b - A_p y_hat|| / (||A_p|| ||y_hat||)`, PNE only.
    pub rel_residual_precond: Option<f64>,
}

/// Builds a report from a computed solution; fails on a zero solution.
pub fn report(
    method: Method,
    a: &DenseMatrix,
    a_norm: f64,
    b: &[f64],
    x_star: &[f64],
    x_hat: Vec<f64>,
    precond: Option<(&DenseMatrix, f64, Vec<f64>)>,
) -> Result<SolveReport> {
    let xn = two_norm(&x_hat);
    if xn == 0.0 {
        return Err(Error::ZeroSolution);
    }
    if x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    let diff: Vec<f64> = x_hat.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let rel_error = two_norm(&diff) / xn;
    let rel_residual = residual_norm(a, b, &x_hat) / (a_norm * xn);
    let (y_hat, rel_residual_precond) = match precond {
        Some((ap, ap_norm, y)) => {
            let yn = two_norm(&y);
            if yn == 0.0 {
                return Err(Error::ZeroSolution);
            }
            let rp = residual_norm(ap, b, &y) / (ap_norm * yn);
            (Some(DenseMatrix::column_vector(y)?), Some(rp))
        }
        None => (None, None),
    };
    Ok(SolveReport {
        method,
        x_hat: DenseMatrix::column_vector(x_hat)?,
        y_hat,
        rel_error,
        rel_residual,
        rel_residual_precond,
    })
}

/// `||b - M x||`.
pub fn residual_norm(m: &DenseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mx = m.matvec(x);
    let r: Vec<f64> = b.iter().zip(&mx).map(|(bi, v)| bi - v).collect();
    two_norm(&r)
}

/// Householder QR of `A`; `x = R^{-1} (Q^T b)`.
pub struct QrSolver {
    qr: Householder,
    r: DenseMatrix,
}

impl QrSolver {
    pub fn new(a: &DenseMatrix) -> Self {
        let qr = Householder::factor(a);
        let r = qr.r();
        Self { qr, r }
    }

    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut y = b.to_vec();
        self.qr.apply_qt(&mut y);
        y.truncate(self.qr.cols());
        back_substitute_checked(&self.r, &mut y)?;
        Ok(y)
    }
}

/// Cholesky of `A^T A`.
pub struct NormalSolver {
    a: DenseMatrix,
    chol: Result<Cholesky>,
}

impl NormalSolver {
    pub fn new(a: &DenseMatrix) -> Self {
        Self {
            a: a.clone(),
            chol: Cholesky::factor(&a.gram()),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let chol = self.chol.as_ref().map_err(clone_error)?;
        let mut x = self.a.matvec_transpose(b);
        chol.solve_in_place(&mut x);
        Ok(x)
    }
}

/// `A_p^T A_p y = A_p^T b` by Cholesky, then `R_s x = y`.
pub struct PneSolver {
    ap: DenseMatrix,
    r_s: DenseMatrix,
    chol: Result<Cholesky>,
}

impl PneSolver {
    pub fn new(ap: &DenseMatrix, r_s: &DenseMatrix) -> Self {
        let mut g = ap.gram();
        g.symmetrize();
        Self {
            ap: ap.clone(),
            r_s: r_s.clone(),
            chol: Cholesky::factor(&g),
        }
    }

    /// Returns `(x_hat, y_hat)`.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let chol = self.chol.as_ref().map_err(clone_error)?;
        let mut y = self.ap.matvec_transpose(b);
        chol.solve_in_place(&mut y);
        let mut x = y.clone();
        back_substitute_checked(&self.r_s, &mut x)?;
        Ok((x, y))
    }
}

/// `A_p^T A x = A_p^T b` by LU with partial pivoting.
pub struct HpneSolver {
    ap: DenseMatrix,
    lu: Result<Lu>,
}

impl HpneSolver {
    pub fn new(a: &DenseMatrix, ap: &DenseMatrix) -> Self {
        Self::from_product(ap, &ap.transpose_matmul(a))
    }

    /// Uses an already formed `A_p^T A`.
    pub fn from_product(ap: &DenseMatrix, apta: &DenseMatrix) -> Self {
        Self {
            ap: ap.clone(),
            lu: Lu::factor(apta),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self.lu.as_ref().map_err(clone_error)?;
        let mut x = self.ap.matvec_transpose(b);
        lu.solve_in_place(&mut x);
        Ok(x)
    }
}

/// Factorization errors are stored and handed out once per solve.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::SingularTriangular { index } => Error::SingularTriangular { index: *index },
        Error::SingularSystem { index } => Error::SingularSystem { index: *index },
        Error::NotPositiveDefinite { index, pivot } => Error::NotPositiveDefinite {
            index: *index,
            pivot: *pivot,
        },
        Error::NotSymmetric(v) => Error::NotSymmetric(*v),
        other => Error::InvalidArgument(other.to_string()),
    }
}

pub fn solve_qr(p: &LeastSquaresProblem) -> Result<SolveReport> {
    let x = QrSolver::new(&p.a).solve(p.b.data())?;
    report(Method::Qr, &p.a, spectral_norm(&p.a), p.b.data(), p.x_star.data(), x, None)
}

pub fn solve_normal(p: &LeastSquaresProblem) -> Result<SolveReport> {
    let x = NormalSolver::new(&p.a).solve(p.b.data())?;
    report(Method::Ne, &p.a, spectral_norm(&p.a), p.b.data(), p.x_star.data(), x, None)
}

pub fn solve_pne(p: &LeastSquaresProblem, pc: &Preconditioner) -> Result<SolveReport> {
    let ap = preconditioner::apply(&p.a, pc)?;
    let (x, y) = PneSolver::new(&ap, &pc.r_s).solve(p.b.data())?;
    let ap_norm = spectral_norm(&ap);
    report(
        Method::Pne,
        &p.a,
        spectral_norm(&p.a),
        p.b.data(),
        p.x_star.data(),
        x,
        Some((&ap, ap_norm, y)),
    )
}

pub fn solve_hpne(p: &LeastSquaresProblem, pc: &Preconditioner) -> Result<SolveReport> {
    let ap = preconditioner::apply(&p.a, pc)?;
    let x = HpneSolver::new(&p.a, &ap).solve(p.b.data())?;
    report(Method::Hpne, &p.a, spectral_norm(&p.a), p.b.data(), p.x_star.data(), x, None)
}

/// Dispatches on `method`; `pc` is required for PNE and HPNE.
pub fn solve(p: &LeastSquaresProblem, method: Method, pc: Option<&Preconditioner>) -> Result<SolveReport> {
    let need = || Error::InvalidArgument(format!("method {method} needs a preconditioner"));
    match method {
        Method::Qr => solve_qr(p),
        Method::Ne => solve_normal(p),
        Method::Pne => solve_pne(p, pc.ok_or_else(need)?),
        Method::Hpne => solve_hpne(p, pc.ok_or_else(need)?),
    }
}
