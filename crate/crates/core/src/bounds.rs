//! Perturbation bounds for the four solution paths, evaluated from measured
//! condition numbers, norm ratios and residual quotients.
//!
//! All bounds take the perturbation size `epsilon` explicitly; experiments use
//! machine epsilon without dimensional factors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dense::{singular_values, triangular_singular_values, two_norm, DenseMatrix, EPS};
use crate::error::{Error, Result};
use crate::preconditioner::{self, Preconditioner};
use crate::problem::LeastSquaresProblem;
use crate::solvers::{self, Method, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Ls,
    Pne,
    Hpne,
    Ne,
    PneSymAp,
    PneSymRs,
    HpneSym,
}

/// How a bound is expected to compare with observed errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Realism {
    Realistic,
    Optimistic,
    Pessimistic,
}

impl BoundKind {
    pub const ALL: [BoundKind; 7] = [
        BoundKind::Ls,
        BoundKind::Pne,
        BoundKind::Hpne,
        BoundKind::Ne,
        BoundKind::PneSymAp,
        BoundKind::PneSymRs,
        BoundKind::HpneSym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Ls => "ls",
            BoundKind::Pne => "pne",
            BoundKind::Hpne => "hpne",
            BoundKind::Ne => "ne",
            BoundKind::PneSymAp => "pne_sym_ap",
            BoundKind::PneSymRs => "pne_sym_rs",
            BoundKind::HpneSym => "hpne_sym",
        }
    }

    /// Column name in the bounds CSV.
    pub fn column(self) -> &'static str {
        match self {
            BoundKind::Ls => "bound_ls",
            BoundKind::Pne => "bound_pne",
            BoundKind::Hpne => "bound_hpne",
            BoundKind::Ne => "bound_ne",
            BoundKind::PneSymAp => "bound_pne_sym_ap",
            BoundKind::PneSymRs => "bound_pne_sym_rs",
            BoundKind::HpneSym => "bound_hpne_sym",
        }
    }

    pub fn realism(self) -> Realism {
        match self {
            BoundKind::PneSymAp | BoundKind::HpneSym => Realism::Optimistic,
            BoundKind::PneSymRs => Realism::Pessimistic,
            _ => Realism::Realistic,
        }
    }
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("bound_").unwrap_or(&t);
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == t)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bound '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    /// Norm-ratio factor; 1 for bounds that have none.
    pub nu: f64,
    /// Preconditioner amplifier; 0 for bounds that have none.
    pub eta: f64,
    pub kappa_terms: BTreeMap<String, f64>,
    pub residual_term: f64,
    pub epsilon_used: f64,
    pub realism: Realism,
}

fn report(
    kind: BoundKind,
    value: f64,
    nu: f64,
    eta: f64,
    kappas: &[(&str, f64)],
    residual_term: f64,
    epsilon: f64,
) -> BoundReport {
    BoundReport {
        kind,
        value,
        nu,
        eta,
        kappa_terms: kappas.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        residual_term,
        epsilon_used: epsilon,
        realism: kind.realism(),
    }
}

/// `eta = kappa(R_s) eps / (1 - kappa(R_s) eps)`.
pub fn eta(kappa_rs: f64, epsilon: f64) -> Result<f64> {
    let t = kappa_rs * epsilon;
    if !(t < 1.0) {
        return Err(Error::EtaUndefined(t));
    }
    Ok(t / (1.0 - t))
}

/// `kappa(A) eps (1 + kappa(A) rho)`.
pub fn bound_ls(kappa_a: f64, epsilon: f64, rel_residual: f64) -> BoundReport {
    let value = kappa_a * epsilon * (1.0 + kappa_a * rel_residual);
    report(BoundKind::Ls, value, 1.0, 0.0, &[("kappa_a", kappa_a)], rel_residual, epsilon)
}

/// `kappa(R_s) nu (kappa(A_p) eps + kappa(A_p)^2 eta (rho_p + eps))`.
pub fn bound_pne(kappa_rs: f64, kappa_ap: f64, nu: f64, rel_residual_p: f64, epsilon: f64) -> Result<BoundReport> {
    let eta = eta(kappa_rs, epsilon)?;
    let value = kappa_rs * nu * (kappa_ap * epsilon + kappa_ap * kappa_ap * eta * (rel_residual_p + epsilon));
    Ok(report(
        BoundKind::Pne,
        value,
        nu,
        eta,
        &[("kappa_rs", kappa_rs), ("kappa_ap", kappa_ap)],
        rel_residual_p,
        epsilon,
    ))
}

/// `kappa(A_p^T A) nu (eta rho + (1 + eta) eps)`.
pub fn bound_hpne(kappa_apta: f64, nu: f64, kappa_rs: f64, rel_residual: f64, epsilon: f64) -> Result<BoundReport> {
    let eta = eta(kappa_rs, epsilon)?;
    let value = kappa_apta * nu * (eta * rel_residual + (1.0 + eta) * epsilon);
    Ok(report(
        BoundKind::Hpne,
        value,
        nu,
        eta,
        &[("kappa_apta", kappa_apta), ("kappa_rs", kappa_rs)],
        rel_residual,
        epsilon,
    ))
}

/// `kappa(A)^2 eps (rho + 1 + eps)`.
pub fn bound_ne(kappa_a: f64, epsilon: f64, rel_residual: f64) -> BoundReport {
    let value = kappa_a * kappa_a * epsilon * (rel_residual + 1.0 + epsilon);
    report(BoundKind::Ne, value, 1.0, 0.0, &[("kappa_a", kappa_a)], rel_residual, epsilon)
}

/// Same perturbation on every copy of `A_p`:
/// `kappa(R_s) nu kappa(A_p)^2 eps (rho_p + 1 + eps)`.
pub fn bound_pne_sym_ap(kappa_rs: f64, nu: f64, kappa_ap: f64, epsilon: f64, rel_residual_p: f64) -> BoundReport {
    let value = kappa_rs * nu * kappa_ap * kappa_ap * epsilon * (rel_residual_p + 1.0 + epsilon);
    report(
        BoundKind::PneSymAp,
        value,
        nu,
        0.0,
        &[("kappa_rs", kappa_rs), ("kappa_ap", kappa_ap)],
        rel_residual_p,
        epsilon,
    )
}

/// Same perturbation on every copy of `R_s`:
/// `kappa(R_s) nu kappa(A_p)^2 eta (rho_p + 1 + eta)`.
pub fn bound_pne_sym_rs(kappa_rs: f64, nu: f64, kappa_ap: f64, epsilon: f64, rel_residual_p: f64) -> Result<BoundReport> {
    let eta = eta(kappa_rs, epsilon)?;
    let value = kappa_rs * nu * kappa_ap * kappa_ap * eta * (rel_residual_p + 1.0 + eta);
    Ok(report(
        BoundKind::PneSymRs,
        value,
        nu,
        eta,
        &[("kappa_rs", kappa_rs), ("kappa_ap", kappa_ap)],
        rel_residual_p,
        epsilon,
    ))
}

/// Additive perturbations of `A_p` and `A`:
/// `kappa(A_p^T A) nu eps (rho + 1 + eps)`.
pub fn bound_hpne_sym(kappa_apta: f64, nu: f64, epsilon: f64, rel_residual: f64) -> BoundReport {
    let value = kappa_apta * nu * epsilon * (rel_residual + 1.0 + epsilon);
    report(
        BoundKind::HpneSym,
        value,
        nu,
        0.0,
        &[("kappa_apta", kappa_apta)],
        rel_residual,
        epsilon,
    )
}

/// Norms and condition numbers of `A`, `A_p`, `R_s` and `A_p^T A`, all from
/// singular values of the matrices themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpectra {
    pub norm_a: f64,
    pub norm_ap: f64,
    pub norm_rs: f64,
    pub norm_apta: f64,
    pub kappa_a: f64,
    pub kappa_ap: f64,
    pub kappa_rs: f64,
    pub kappa_apta: f64,
}

impl SystemSpectra {
    pub fn compute(a: &DenseMatrix, ap: &DenseMatrix, r_s: &DenseMatrix) -> Result<Self> {
        let apta = ap.transpose_matmul(a);
        let sa = singular_values(a);
        Self::from_spectra(&sa, ap, r_s, &apta)
    }

    /// Reuses the triangular factor of `A` and an already formed `A_p^T A`.
    pub fn from_factors(r_a: &DenseMatrix, ap: &DenseMatrix, r_s: &DenseMatrix, apta: &DenseMatrix) -> Result<Self> {
        Self::from_spectra(&triangular_singular_values(r_a), ap, r_s, apta)
    }

    fn from_spectra(
        sa: &crate::dense::SingularSpectrum,
        ap: &DenseMatrix,
        r_s: &DenseMatrix,
        apta: &DenseMatrix,
    ) -> Result<Self> {
        Self::assemble(sa, &singular_values(ap), r_s, apta)
    }

    /// `from_factors` with the singular values of `A_p` already known.
    pub fn from_measured(
        r_a: &DenseMatrix,
        sap: &crate::dense::SingularSpectrum,
        r_s: &DenseMatrix,
        apta: &DenseMatrix,
    ) -> Result<Self> {
        Self::assemble(&triangular_singular_values(r_a), sap, r_s, apta)
    }

    fn assemble(
        sa: &crate::dense::SingularSpectrum,
        sap: &crate::dense::SingularSpectrum,
        r_s: &DenseMatrix,
        apta: &DenseMatrix,
    ) -> Result<Self> {
        let srs = triangular_singular_values(r_s);
        let sapta = singular_values(apta);
        Ok(Self {
            norm_a: sa.max(),
            norm_ap: sap.max(),
            norm_rs: srs.max(),
            norm_apta: sapta.max(),
            kappa_a: sa.condition_number()?,
            kappa_ap: sap.condition_number()?,
            kappa_rs: srs.condition_number()?,
            kappa_apta: sapta.condition_number()?,
        })
    }

    /// `||A_p|| ||A|| / ||A_p^T A||`, at least 1.
    pub fn nu_hpne(&self) -> f64 {
        self.norm_ap * self.norm_a / self.norm_apta
    }
}

/// `||R_s x|| / (||R_s|| ||x||)`, at most 1.
pub fn nu_pne(r_s: &DenseMatrix, norm_rs: f64, x_hat: &[f64]) -> Result<f64> {
    let xn = two_norm(x_hat);
    if xn == 0.0 {
        return Err(Error::ZeroSolution);
    }
    Ok(two_norm(&r_s.matvec(x_hat)) / (norm_rs * xn))
}

/// Everything the bound formulas read, as measured for one solve of each
/// method. Residual quotients use the computed solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    pub epsilon: f64,
    pub kappa_a: f64,
    pub kappa_ap: f64,
    pub kappa_rs: f64,
    pub kappa_apta: f64,
    pub nu_pne: Option<f64>,
    pub nu_hpne: f64,
    /// `||b - A x|| / (||A|| ||x||)` for the QR solution.
    pub res_ls: Option<f64>,
    /// The same for the NE solution; the QR value when NE failed.
    pub res_ne: Option<f64>,
    /// `||b - A_p y|| / (||A_p|| ||y||)` for the PNE intermediate `y`.
    pub res_pne: Option<f64>,
    /// `||b - A x|| / (||A|| ||x||)` for the HPNE solution.
    pub res_hpne: Option<f64>,
}

impl BoundComponents {
    /// Collects components from spectra and whichever reports succeeded.
    pub fn from_parts(spectra: &SystemSpectra, r_s: &DenseMatrix, reports: &[&SolveReport], epsilon: f64) -> Result<Self> {
        let find = |m: Method| reports.iter().find(|r| r.method == m);
        let nu_pne = match find(Method::Pne) {
            Some(r) => Some(nu_pne(r_s, spectra.norm_rs, r.x_hat.data())?),
            None => None,
        };
        let res_ls = find(Method::Qr).map(|r| r.rel_residual);
        Ok(Self {
            epsilon,
            kappa_a: spectra.kappa_a,
            kappa_ap: spectra.kappa_ap,
            kappa_rs: spectra.kappa_rs,
            kappa_apta: spectra.kappa_apta,
            nu_pne,
            nu_hpne: spectra.nu_hpne(),
            res_ls,
            res_ne: find(Method::Ne).map(|r| r.rel_residual).or(res_ls),
            res_pne: find(Method::Pne).and_then(|r| r.rel_residual_precond),
            res_hpne: find(Method::Hpne).map(|r| r.rel_residual),
        })
    }

    pub fn eta(&self) -> Result<f64> {
        eta(self.kappa_rs, self.epsilon)
    }

    pub fn evaluate(&self, kind: BoundKind) -> Result<BoundReport> {
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("bound {} needs {what}", kind.name())))
        };
        let e = self.epsilon;
        match kind {
            BoundKind::Ls => Ok(bound_ls(self.kappa_a, e, need(self.res_ls, "a QR solve")?)),
            BoundKind::Ne => Ok(bound_ne(self.kappa_a, e, need(self.res_ne, "an NE or QR solve")?)),
            BoundKind::Pne => bound_pne(
                self.kappa_rs,
                self.kappa_ap,
                need(self.nu_pne, "a PNE solve")?,
                need(self.res_pne, "a PNE solve")?,
                e,
            ),
            BoundKind::PneSymAp => Ok(bound_pne_sym_ap(
                self.kappa_rs,
                need(self.nu_pne, "a PNE solve")?,
                self.kappa_ap,
                e,
                need(self.res_pne, "a PNE solve")?,
            )),
            BoundKind::PneSymRs => bound_pne_sym_rs(
                self.kappa_rs,
                need(self.nu_pne, "a PNE solve")?,
                self.kappa_ap,
                e,
                need(self.res_pne, "a PNE solve")?,
            ),
            BoundKind::Hpne => bound_hpne(
                self.kappa_apta,
                self.nu_hpne,
                self.kappa_rs,
                need(self.res_hpne, "an HPNE solve")?,
                e,
            ),
            BoundKind::HpneSym => Ok(bound_hpne_sym(
                self.kappa_apta,
                self.nu_hpne,
                e,
                need(self.res_hpne, "an HPNE solve")?,
            )),
        }
    }

    /// The sign conditions `nu_pne <= 1` and `nu_hpne >= 1`, with `1e-12` slack.
    pub fn nu_in_range(&self) -> bool {
        self.nu_pne.is_none_or(|v| v > 0.0 && v <= 1.0 + 1e-12) && self.nu_hpne >= 1.0 - 1e-12
    }
}

/// Solves `p` with every method, measures all spectra, and gathers bound
/// components. Failed solves leave their components empty.
pub fn measure_components(p: &LeastSquaresProblem, pc: &Preconditioner) -> Result<(BoundComponents, Vec<SolveReport>)> {
    let ap = preconditioner::apply(&p.a, pc)?;
    let spectra = SystemSpectra::compute(&p.a, &ap, &pc.r_s)?;
    let reports: Vec<SolveReport> = Method::ALL
        .iter()
        .filter_map(|&m| solvers::solve(p, m, Some(pc)).ok())
        .collect();
    let refs: Vec<&SolveReport> = reports.iter().collect();
    let comps = BoundComponents::from_parts(&spectra, &pc.r_s, &refs, EPS)?;
    Ok((comps, reports))
}
