//! Independent oracles for the bounds and the sketching guarantees.
//!
//! The perturbation checks build the perturbed systems of the bound models
//! explicitly and compare their exact error with the bound. The Monte Carlo
//! check counts how often the singular value and condition number intervals
//! hold over independent sketches.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{self, SystemSpectra};
use crate::dense::{singular_values, thin_qr, triangular_singular_values, two_norm, DenseMatrix, Lu, EPS};
use crate::error::{Error, Result};
use crate::preconditioner::{self, Preconditioner};
use crate::problem::LeastSquaresProblem;
use crate::randomize::{coherence, mix_seed, sample_count, SeededRng};
use crate::solvers::residual_norm;

/// The perturbations of one injected trial.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub e_s: DenseMatrix,
    /// `E_p` for the PNE model, `E_A` for the HPNE model.
    pub e_second: DenseMatrix,
    pub trial_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationModel {
    Pne,
    Hpne,
}

impl PerturbationSpec {
    /// Gaussian directions rescaled to spectral norms `epsilon ||R_s||` and
    /// `epsilon ||target||`.
    pub fn draw(r_s: &DenseMatrix, target: &DenseMatrix, epsilon: f64, trial_seed: u64) -> Self {
        let mut rng = SeededRng::new(trial_seed);
        let e_s = scaled_gaussian(r_s, epsilon, &mut rng);
        let e_second = scaled_gaussian(target, epsilon, &mut rng);
        Self {
            epsilon,
            e_s,
            e_second,
            trial_seed,
        }
    }
}

fn scaled_gaussian(like: &DenseMatrix, epsilon: f64, rng: &mut SeededRng) -> DenseMatrix {
    let (r, c) = like.shape();
    let g = DenseMatrix::new(r, c, rng.normals(r * c)).expect("finite normals");
    let target = epsilon * singular_values(like).max();
    let gn = singular_values(&g).max();
    g.scaled(target / gn)
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationTrial {
    pub model: PerturbationModel,
    pub trial: usize,
    pub epsilon: f64,
    pub actual_error: f64,
    pub bound_value: f64,
    /// The bound at machine epsilon: the size of unmodelled rounding in the
    /// perturbed solve.
    pub rounding_floor: f64,
    pub dominated: bool,
    /// The symmetric-perturbation alternative for the same trial; reported only.
    pub alt_bound_value: f64,
    pub alt_dominated: bool,
    pub nu: f64,
}

/// `A M^{-1}` for a general square `M`, via LU of `M^T`.
fn right_solve_general(a: &DenseMatrix, m: &DenseMatrix) -> Result<DenseMatrix> {
    let lu = Lu::factor(&m.transpose())?;
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    let mut row = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[(i, j)];
        }
        lu.solve_in_place(&mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

struct Setup {
    ap: DenseMatrix,
    spectra: SystemSpectra,
}

fn setup(p: &LeastSquaresProblem, pc: &Preconditioner, epsilon: f64) -> Result<Setup> {
    let ap = preconditioner::apply(&p.a, pc)?;
    let spectra = SystemSpectra::compute(&p.a, &ap, &pc.r_s)?;
    let t = spectra.kappa_rs * epsilon;
    if !(t < 1.0) {
        return Err(Error::HypothesisViolated(t));
    }
    Ok(Setup { ap, spectra })
}

fn rel_error(x_hat: &[f64], x_star: &[f64]) -> Result<f64> {
    let xn = two_norm(x_hat);
    if xn == 0.0 {
        return Err(Error::ZeroSolution);
    }
    let d: Vec<f64> = x_hat.iter().zip(x_star).map(|(a, b)| a - b).collect();
    Ok(two_norm(&d) / xn)
}

/// One injected PNE trial: `A_1^T A_2 y = A_1^T b`, `R_s x = y` with
/// `A_1 = A (R_s + E_s)^{-1}` and `A_2 = A_p + E_p`.
pub fn perturbed_pne_trial(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    spec: &PerturbationSpec,
    trial: usize,
) -> Result<PerturbationTrial> {
    let s = setup(p, pc, spec.epsilon)?;
    pne_trial(p, pc, &s, spec, trial)
}

fn pne_trial(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    s: &Setup,
    spec: &PerturbationSpec,
    trial: usize,
) -> Result<PerturbationTrial> {
    let a1 = right_solve_general(&p.a, &pc.r_s.add(&spec.e_s))?;
    let a2 = s.ap.add(&spec.e_second);
    let y = Lu::factor(&a1.transpose_matmul(&a2))?.solve(&a1.transpose_matmul(&p.b))?;
    let y = y.into_data();
    let mut x = y.clone();
    crate::dense::back_substitute_checked(&pc.r_s, &mut x)?;

    let sp = &s.spectra;
    let nu = bounds::nu_pne(&pc.r_s, sp.norm_rs, &x)?;
    let yn = two_norm(&y);
    if yn == 0.0 {
        return Err(Error::ZeroSolution);
    }
    let rho = residual_norm(&s.ap, p.b.data(), &y) / (sp.norm_ap * yn);
    let actual_error = rel_error(&x, p.x_star.data())?;
    let bound_value = bounds::bound_pne(sp.kappa_rs, sp.kappa_ap, nu, rho, spec.epsilon)?.value;
    let rounding_floor = bounds::bound_pne(sp.kappa_rs, sp.kappa_ap, nu, rho, EPS)?.value;
    let alt_bound_value = bounds::bound_pne_sym_ap(sp.kappa_rs, nu, sp.kappa_ap, spec.epsilon, rho).value;
    Ok(PerturbationTrial {
        model: PerturbationModel::Pne,
        trial,
        epsilon: spec.epsilon,
        actual_error,
        bound_value,
        rounding_floor,
        dominated: actual_error <= bound_value + rounding_floor,
        alt_bound_value,
        alt_dominated: actual_error <= alt_bound_value + rounding_floor,
        nu,
    })
}

/// One injected HPNE trial: `A_1^T A_2 x = A_1^T b` with
/// `A_1 = A (R_s + E_s)^{-1}` and `A_2 = A + E_A`.
pub fn perturbed_hpne_trial(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    spec: &PerturbationSpec,
    trial: usize,
) -> Result<PerturbationTrial> {
    let s = setup(p, pc, spec.epsilon)?;
    hpne_trial(p, pc, &s, spec, trial)
}

fn hpne_trial(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    s: &Setup,
    spec: &PerturbationSpec,
    trial: usize,
) -> Result<PerturbationTrial> {
    let a1 = right_solve_general(&p.a, &pc.r_s.add(&spec.e_s))?;
    let a2 = p.a.add(&spec.e_second);
    let x = Lu::factor(&a1.transpose_matmul(&a2))?.solve(&a1.transpose_matmul(&p.b))?;
    let x = x.into_data();

    let sp = &s.spectra;
    let nu = sp.nu_hpne();
    let xn = two_norm(&x);
    if xn == 0.0 {
        return Err(Error::ZeroSolution);
    }
    let rho = residual_norm(&p.a, p.b.data(), &x) / (sp.norm_a * xn);
    let actual_error = rel_error(&x, p.x_star.data())?;
    let bound_value = bounds::bound_hpne(sp.kappa_apta, nu, sp.kappa_rs, rho, spec.epsilon)?.value;
    let rounding_floor = bounds::bound_hpne(sp.kappa_apta, nu, sp.kappa_rs, rho, EPS)?.value;
    let alt_bound_value = bounds::bound_hpne_sym(sp.kappa_apta, nu, spec.epsilon, rho).value;
    Ok(PerturbationTrial {
        model: PerturbationModel::Hpne,
        trial,
        epsilon: spec.epsilon,
        actual_error,
        bound_value,
        rounding_floor,
        dominated: actual_error <= bound_value + rounding_floor,
        alt_bound_value,
        alt_dominated: actual_error <= alt_bound_value + rounding_floor,
        nu,
    })
}

fn perturb_check(
    model: PerturbationModel,
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    epsilon: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<Vec<PerturbationTrial>> {
    let s = setup(p, pc, epsilon)?;
    let base = rng.next_u64();
    let target = match model {
        PerturbationModel::Pne => &s.ap,
        PerturbationModel::Hpne => &p.a,
    };
    (0..trials)
        .map(|t| {
            let spec = PerturbationSpec::draw(&pc.r_s, target, epsilon, mix_seed(base, t as u64));
            match model {
                PerturbationModel::Pne => pne_trial(p, pc, &s, &spec, t),
                PerturbationModel::Hpne => hpne_trial(p, pc, &s, &spec, t),
            }
        })
        .collect()
}

/// Injected-perturbation trials for the PNE model.
pub fn perturb_check_t3(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    epsilon: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<Vec<PerturbationTrial>> {
    perturb_check(PerturbationModel::Pne, p, pc, epsilon, trials, rng)
}

/// Injected-perturbation trials for the HPNE model.
pub fn perturb_check_t2(
    p: &LeastSquaresProblem,
    pc: &Preconditioner,
    epsilon: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<Vec<PerturbationTrial>> {
    perturb_check(PerturbationModel::Hpne, p, pc, epsilon, trials, rng)
}

/// `||(b - A_p R_s x*) - (b - A x*)||`, relative to `||b - A x*||` unless
/// that is zero.
pub fn residual_identity_check(p: &LeastSquaresProblem, pc: &Preconditioner) -> Result<f64> {
    let ap = preconditioner::apply(&p.a, pc)?;
    let y_star = pc.r_s.matvec(p.x_star.data());
    let r1: Vec<f64> = p
        .b
        .data()
        .iter()
        .zip(ap.matvec(&y_star))
        .map(|(b, v)| b - v)
        .collect();
    let r2: Vec<f64> = p
        .b
        .data()
        .iter()
        .zip(p.a.matvec(p.x_star.data()))
        .map(|(b, v)| b - v)
        .collect();
    let d: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a - b).collect();
    let r2n = two_norm(&r2);
    let dn = two_norm(&d);
    Ok(if r2n == 0.0 { dn } else { dn / r2n })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReciprocalCheck {
    /// `max_i |sigma_i(S F Q) sigma_{n-i+1}(A_p) - 1|`.
    pub max_deviation: f64,
    /// `|kappa(S F Q) / kappa(A_p) - 1|`.
    pub kappa_deviation: f64,
}

/// Compares the singular values of the sketched orthonormal basis with the
/// reciprocals of those of `A_p`, using the sketch stored in `pc`.
pub fn reciprocal_sv_check(a: &DenseMatrix, pc: &Preconditioner) -> Result<ReciprocalCheck> {
    let q = thin_qr(a).q;
    let sq = pc.sketch.apply(&q);
    let s_sq = singular_values(&sq);
    let s_ap = singular_values(&preconditioner::apply(a, pc)?);
    let n = s_ap.len();
    let max_deviation = (0..n)
        .map(|i| (s_sq.values()[i] * s_ap.values()[n - 1 - i] - 1.0).abs())
        .fold(0.0, f64::max);
    let kappa_deviation = (s_sq.condition_number()? / s_ap.condition_number()? - 1.0).abs();
    Ok(ReciprocalCheck {
        max_deviation,
        kappa_deviation,
    })
}

/// Wilson score interval for a binomial proportion at about 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct McCondReport {
    pub trials: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub coherence: f64,
    pub c_used: usize,
    /// All `sigma_j(A_p)` in `[1/sqrt(1+eps), 1/sqrt(1-eps)]`.
    pub coverage_sv: f64,
    /// `kappa(R_s) / kappa(A)` in `[sqrt((1-eps)/(1+eps)), sqrt((1+eps)/(1-eps))]`.
    pub coverage_krs: f64,
    /// `kappa(A_p^T A_p)` in `[(1-eps)/(1+eps), (1+eps)/(1-eps)]`.
    pub coverage_kapap: f64,
    /// `kappa(A_p^T A) / kappa(A)` in the same interval as for `R_s`.
    pub coverage_kapta: f64,
    pub ci_sv: (f64, f64),
    pub ci_krs: (f64, f64),
    pub ci_kapap: (f64, f64),
    pub ci_kapta: (f64, f64),
    pub rank_failures: usize,
    pub median_kappa_ap: f64,
}

impl McCondReport {
    /// Smallest coverage that still passes at `1 - delta` with a three-sigma
    /// binomial allowance.
    pub fn threshold(&self) -> f64 {
        1.0 - self.delta - 3.0 * (self.delta * (1.0 - self.delta) / self.trials as f64).sqrt()
    }

    pub fn min_coverage(&self) -> f64 {
        self.coverage_sv
            .min(self.coverage_krs)
            .min(self.coverage_kapap)
            .min(self.coverage_kapta)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct McTrial {
    sv: bool,
    krs: bool,
    kapap: bool,
    kapta: bool,
    kappa_ap: f64,
}

fn mc_trial(a: &DenseMatrix, kappa_a: f64, epsilon: f64, c: usize, seed: u64) -> McTrial {
    let failed = McTrial {
        kappa_ap: f64::INFINITY,
        ..McTrial::default()
    };
    let Ok(pc) = Preconditioner::build_seeded(a, c, seed) else {
        return failed;
    };
    let Ok(ap) = preconditioner::apply(a, &pc) else {
        return failed;
    };
    let s_ap = singular_values(&ap);
    let (lo, hi) = ((1.0 / (1.0 + epsilon)).sqrt(), (1.0 / (1.0 - epsilon)).sqrt());
    let sv = s_ap.values().iter().all(|&s| s >= lo && s <= hi);
    let Ok(kappa_ap) = s_ap.condition_number() else {
        return failed;
    };
    let root = ((1.0 - epsilon) / (1.0 + epsilon)).sqrt();
    let in_sqrt = |ratio: f64| ratio >= root && ratio <= 1.0 / root;
    let krs = triangular_singular_values(&pc.r_s)
        .condition_number()
        .is_ok_and(|k| in_sqrt(k / kappa_a));
    // kappa(A_p^T A_p) = kappa(A_p)^2 without forming the Gram matrix.
    let kapap = {
        let k2 = kappa_ap * kappa_ap;
        k2 >= root * root && k2 <= 1.0 / (root * root)
    };
    let kapta = singular_values(&ap.transpose_matmul(a))
        .condition_number()
        .is_ok_and(|k| in_sqrt(k / kappa_a));
    McTrial {
        sv,
        krs,
        kapap,
        kapta,
        kappa_ap,
    }
}

/// Coverage with `c` from the sample-count formula. The coherence estimate
/// is the largest of three pilot draws.
pub fn prob_cond_mc(a: &DenseMatrix, epsilon: f64, delta: f64, trials: usize, rng: &mut SeededRng) -> Result<McCondReport> {
    let q = thin_qr(a).q;
    let mut mu: f64 = 0.0;
    for _ in 0..3 {
        mu = mu.max(coherence(&q, rng)?);
    }
    let c = sample_count(a.rows(), a.cols(), mu, epsilon, delta)?;
    prob_cond_mc_with_c(a, epsilon, delta, c, mu, trials, rng)
}

/// Coverage for an explicitly chosen sample count.
pub fn prob_cond_mc_with_c(
    a: &DenseMatrix,
    epsilon: f64,
    delta: f64,
    c: usize,
    coherence: f64,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<McCondReport> {
    if !(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} and delta {delta} must lie in (0, 1)"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let kappa_a = singular_values(a).condition_number()?;
    let base = rng.next_u64();
    let results: Vec<McTrial> = (0..trials)
        .into_par_iter()
        .map(|t| mc_trial(a, kappa_a, epsilon, c, mix_seed(base, t as u64)))
        .collect();

    let count = |f: fn(&McTrial) -> bool| results.iter().filter(|t| f(t)).count();
    let (n_sv, n_krs, n_kapap, n_kapta) = (
        count(|t| t.sv),
        count(|t| t.krs),
        count(|t| t.kapap),
        count(|t| t.kapta),
    );
    let mut kappas: Vec<f64> = results.iter().map(|t| t.kappa_ap).collect();
    kappas.sort_by(f64::total_cmp);
    let tf = trials as f64;
    Ok(McCondReport {
        trials,
        epsilon,
        delta,
        coherence,
        c_used: c,
        coverage_sv: n_sv as f64 / tf,
        coverage_krs: n_krs as f64 / tf,
        coverage_kapap: n_kapap as f64 / tf,
        coverage_kapta: n_kapta as f64 / tf,
        ci_sv: wilson_interval(n_sv, trials),
        ci_krs: wilson_interval(n_krs, trials),
        ci_kapap: wilson_interval(n_kapap, trials),
        ci_kapta: wilson_interval(n_kapta, trials),
        rank_failures: results.iter().filter(|t| t.kappa_ap.is_infinite()).count(),
        median_kappa_ap: median_sorted(&kappas),
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate, haar_orthogonal};

    fn small() -> (LeastSquaresProblem, Preconditioner) {
        let p = generate(50, 10, 1e3, 1e-3, 21).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 30, 22).unwrap();
        (p, pc)
    }

    #[test]
    fn spec_draw_has_requested_norms() {
        let (p, pc) = small();
        let spec = PerturbationSpec::draw(&pc.r_s, &p.a, 1e-6, 5);
        let rs = singular_values(&pc.r_s).max();
        assert!((singular_values(&spec.e_s).max() / rs / 1e-6 - 1.0).abs() < 1e-10);
        assert!((singular_values(&spec.e_second).max() / 1e-6 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unperturbed_trials_are_dominated() {
        let (p, pc) = small();
        for t in perturb_check_t3(&p, &pc, 0.0, 3, &mut SeededRng::new(1)).unwrap() {
            assert!(t.dominated && t.actual_error < 1e-9, "{t:?}");
        }
        for t in perturb_check_t2(&p, &pc, 0.0, 3, &mut SeededRng::new(1)).unwrap() {
            assert!(t.dominated && t.actual_error < 1e-9, "{t:?}");
        }
    }

    #[test]
    fn injected_bounds_dominate() {
        let (p, pc) = small();
        let t3 = perturb_check_t3(&p, &pc, 1e-10, 20, &mut SeededRng::new(2)).unwrap();
        assert!(t3.iter().all(|t| t.dominated && t.nu <= 1.0 + 1e-12));
        let t2 = perturb_check_t2(&p, &pc, 1e-10, 20, &mut SeededRng::new(3)).unwrap();
        assert!(t2.iter().all(|t| t.dominated && t.nu >= 1.0 - 1e-12));
    }

    #[test]
    fn injected_error_is_linear_in_epsilon() {
        let (p, pc) = small();
        let mean_err = |eps: f64| {
            let v = perturb_check_t3(&p, &pc, eps, 10, &mut SeededRng::new(4)).unwrap();
            v.iter().map(|t| t.actual_error).sum::<f64>() / v.len() as f64
        };
        let xs = [-8.0f64, -7.0, -6.0];
        let ys: Vec<f64> = xs.iter().map(|&e| mean_err(10f64.powf(e)).log10()).collect();
        let slope = fit_slope(&xs, &ys);
        assert!((slope - 1.0).abs() <= 0.2, "{slope}");
    }

    fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn hypothesis_violation_is_reported() {
        let (p, pc) = small();
        assert!(matches!(
            perturb_check_t3(&p, &pc, 0.1, 1, &mut SeededRng::new(0)),
            Err(Error::HypothesisViolated(_))
        ));
    }

    #[test]
    fn residual_identity() {
        let p = generate(200, 20, 1e8, 1e-4, 5).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 60, 6).unwrap();
        assert!(residual_identity_check(&p, &pc).unwrap() <= 1e-6);
        let p0 = generate(200, 20, 1e8, 0.0, 5).unwrap();
        assert!(residual_identity_check(&p0, &pc).unwrap() <= 1e-12);
    }

    #[test]
    fn reciprocal_singular_values() {
        let p = generate(256, 20, 1e4, 0.0, 7).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 60, 8).unwrap();
        let r = reciprocal_sv_check(&p.a, &pc).unwrap();
        assert!(r.max_deviation <= 1e-8 && r.kappa_deviation <= 1e-8, "{r:?}");

        let q = haar_orthogonal(32, 4, &mut SeededRng::new(9));
        let sketch = crate::randomize::SketchOperator {
            signs: crate::randomize::random_sign_diagonal(32, &mut SeededRng::new(10)),
            sample: crate::randomize::SampleSet::from_indices(32, (0..32).collect()).unwrap(),
        };
        let pc = Preconditioner::from_sketch(&q, sketch, 10).unwrap();
        assert!(reciprocal_sv_check(&q, &pc).unwrap().max_deviation <= 1e-10);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(90, 100);
        assert!(lo < 0.9 && hi > 0.9 && lo > 0.8 && hi < 0.96);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }

    #[test]
    fn heavy_sampling_drives_condition_to_one() {
        let a = generate(1024, 8, 1e3, 0.0, 11).unwrap().a;
        let r = prob_cond_mc_with_c(&a, 0.5, 0.1, 512, f64::NAN, 30, &mut SeededRng::new(12)).unwrap();
        assert!(r.median_kappa_ap <= 1.5, "{}", r.median_kappa_ap);
    }

    #[test]
    fn small_coverage_run() {
        let a = generate(256, 8, 1e2, 0.0, 13).unwrap().a;
        let r = prob_cond_mc(&a, 0.5, 0.1, 40, &mut SeededRng::new(14)).unwrap();
        assert!(r.coherence >= 8.0 / 256.0 && r.coherence <= 1.0);
        assert!(r.min_coverage() >= r.threshold(), "{r:?}");
        for f in [r.coverage_sv, r.coverage_krs, r.coverage_kapap, r.coverage_kapta] {
            assert!((0.0..=1.0).contains(&f));
        }
    }
}
