use proptest::prelude::*;

use randne::dense::{cholesky_solve, cond2, lu_solve, singular_values, thin_qr, DenseMatrix};
use randne::preconditioner::{self, Preconditioner};
use randne::problem::{generate, haar_orthogonal, ProblemBase};
use randne::randomize::{coherence, dct2_apply, dct2_transpose_apply, random_sign_diagonal, SeededRng};
use randne::solvers::{solve, Method};

fn gaussian(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut rng = SeededRng::new(seed);
    DenseMatrix::new(m, n, rng.normals(m * n)).unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12).prop_flat_map(|n| (n..n + 30, Just(n)))
}

fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).frob_norm() / b.frob_norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qr_reconstructs_with_orthonormal_q((m, n) in shape(), seed in any::<u64>()) {
        let a = gaussian(m, n, seed);
        let qr = thin_qr(&a);
        prop_assert!(rel_diff(&qr.q.matmul(&qr.r), &a) <= 1e-13);
        prop_assert!(qr.q.gram().sub(&DenseMatrix::identity(n)).frob_norm() <= 1e-13);
        prop_assert!(qr.r.is_upper_triangular());
        prop_assert!((0..n).all(|j| qr.r[(j, j)] >= 0.0));
    }

    #[test]
    fn singular_values_invariant_under_orthogonal_maps((m, n) in shape(), seed in any::<u64>()) {
        let a = gaussian(m, n, seed);
        let mut rng = SeededRng::new(seed ^ 1);
        let u = haar_orthogonal(m, m, &mut rng);
        let v = haar_orthogonal(n, n, &mut rng);
        let s1 = singular_values(&a);
        let s2 = singular_values(&u.matmul(&a).matmul(&v));
        for (x, y) in s1.values().iter().zip(s2.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * s1.max());
        }
    }

    #[test]
    fn condition_number_is_scale_invariant((m, n) in shape(), seed in any::<u64>(), e in -30i32..30) {
        let a = gaussian(m, n, seed);
        let alpha = 10f64.powi(e);
        let k1 = cond2(&a).unwrap();
        let k2 = cond2(&a.scaled(alpha)).unwrap();
        prop_assert!((k1 / k2 - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cholesky_and_lu_agree_on_spd(n in 1usize..15, seed in any::<u64>()) {
        let b = gaussian(n + 5, n, seed);
        let g = b.gram();
        let rhs = gaussian(n, 2, seed ^ 7);
        let x1 = cholesky_solve(&g, &rhs).unwrap();
        let x2 = lu_solve(&g, &rhs).unwrap();
        let k = cond2(&g).unwrap();
        prop_assert!(rel_diff(&x1, &x2) <= 1e-13 * k);
    }

    #[test]
    fn dct_is_orthogonal(m in 1usize..80, seed in any::<u64>()) {
        let x = gaussian(m, 3, seed);
        let y = dct2_apply(&x);
        prop_assert!((y.frob_norm() / x.frob_norm() - 1.0).abs() <= 1e-13);
        prop_assert!(rel_diff(&dct2_transpose_apply(&y), &x) <= 1e-13);
    }

    #[test]
    fn sign_flip_then_dct_round_trips(m in 1usize..64, seed in any::<u64>()) {
        let x = gaussian(m, 2, seed);
        let d = random_sign_diagonal(m, &mut SeededRng::new(seed));
        let mut dx = x.clone();
        for j in 0..2 {
            dx.col_mut(j).iter_mut().zip(&d).for_each(|(v, s)| *v *= s);
        }
        let mut back = dct2_transpose_apply(&dct2_apply(&dx));
        for j in 0..2 {
            back.col_mut(j).iter_mut().zip(&d).for_each(|(v, s)| *v *= s);
        }
        prop_assert!(rel_diff(&back, &x) <= 1e-13);
    }

    #[test]
    fn coherence_lies_between_n_over_m_and_one((m, n) in shape(), seed in any::<u64>()) {
        let q = thin_qr(&gaussian(m, n, seed)).q;
        let mu = coherence(&q, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(mu >= n as f64 / m as f64 * (1.0 - 1e-12));
        prop_assert!(mu <= 1.0 + 1e-12);
    }

    #[test]
    fn same_seed_same_preconditioner(seed in any::<u64>()) {
        let p = generate(64, 6, 1e4, 1e-3, seed).unwrap();
        let a = Preconditioner::build_seeded(&p.a, 18, seed).unwrap();
        let b = Preconditioner::build_seeded(&p.a, 18, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let ap = preconditioner::apply(&p.a, &a).unwrap();
        prop_assert!(rel_diff(&ap.matmul(&a.r_s), &p.a) <= 1e-12);
    }

    #[test]
    fn generated_problems_satisfy_invariants(
        (m, n) in (2usize..10).prop_flat_map(|n| (n + 1..n + 40, Just(n))),
        log_kappa in 0.0f64..10.0,
        log_eta in -16.0f64..0.0,
        seed in any::<u64>(),
    ) {
        let kappa = 10f64.powf(log_kappa);
        let eta = 10f64.powf(log_eta);
        let p = generate(m, n, kappa, eta, seed).unwrap();
        let c = p.check();
        prop_assert!(c.holds(eta), "{:?}", c);
        let again = generate(m, n, kappa, eta, seed).unwrap();
        prop_assert_eq!(p.b.data(), again.b.data());
    }

    #[test]
    fn residual_variants_share_a_and_x(seed in any::<u64>(), e1 in -14.0f64..-1.0, e2 in -14.0f64..-1.0) {
        let base = ProblemBase::new(40, 5, 1e5, seed).unwrap();
        let p1 = base.instance(10f64.powf(e1)).unwrap();
        let p2 = base.instance(10f64.powf(e2)).unwrap();
        prop_assert_eq!(&p1.a, &p2.a);
        prop_assert_eq!(&p1.x_star, &p2.x_star);
    }

    #[test]
    fn well_conditioned_solvers_agree(seed in any::<u64>()) {
        let p = generate(60, 6, 10.0, 1e-2, seed).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, 18, seed).unwrap();
        let qr = solve(&p, Method::Qr, None).unwrap();
        for m in [Method::Ne, Method::Pne, Method::Hpne] {
            let r = solve(&p, m, Some(&pc)).unwrap();
            prop_assert!(r.rel_error <= 1e-11, "{} {}", m, r.rel_error);
            prop_assert!((r.rel_residual / qr.rel_residual - 1.0).abs() <= 1e-8);
        }
    }
}
