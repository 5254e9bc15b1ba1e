//! Randomized invariants over matrix shapes, seeds and pole choices.

use gmf_core::bounds::rho_of;
use gmf_core::harness::{format_sci, parse_dat, render_dat};
use gmf_core::operator::{derive_seed, random_vector};
use gmf_core::{
    builtin, extended_poles, gk_step, gmf_dense, polynomial_poles, project, rational_arnoldi, rgk_run, si_optimal_pole,
    singular_profile, synthesize_test_matrix, BidiagonalState, DMatrix, DenseOperator, Pole, PoleSequence, ProfileKind,
    RunOptions,
};
use proptest::prelude::*;

fn test_matrix(m: usize, n: usize, seed: u64, wide_range: bool) -> DenseOperator {
    let (kind, lo, hi) = if wide_range { (ProfileKind::Logspace, 0.01, 10.0) } else { (ProfileKind::Chebyshev2, 0.5, 4.0) };
    synthesize_test_matrix(m, n, &singular_profile(kind, m.min(n), lo, hi).unwrap(), seed).unwrap()
}

fn orthonormality_gap(q: &DMatrix<f64>) -> f64 {
    (q.tr_mul(q) - DMatrix::identity(q.ncols(), q.ncols())).amax()
}

fn pole_choice(which: u8, lo: f64, hi: f64, k: usize) -> PoleSequence {
    match which % 4 {
        0 => polynomial_poles(k),
        1 => extended_poles(k),
        2 => si_optimal_pole(lo, hi, k).unwrap(),
        _ => PoleSequence::new(vec![Pole::Finite(-lo * lo), Pole::Infinite, Pole::Finite(-hi * hi)], gmf_core::PoleKind::Explicit)
            .unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bidiagonalization_relations_hold(m in 6usize..30, n in 6usize..30, seed in 0u64..1000, k in 1usize..6) {
        let a = test_matrix(m, n, seed, false);
        let b = random_vector(n, derive_seed(seed, 3));
        let mut st = BidiagonalState::new(&a, &b, true).unwrap();
        for _ in 0..k {
            gk_step(&mut st, &a).unwrap();
        }
        let p = DMatrix::from_columns(&st.p);
        let q = DMatrix::from_columns(&st.q_basis[..st.p.len()]);
        let bk = st.bidiagonal();
        prop_assert!(orthonormality_gap(&p) <= 1e-12);
        prop_assert!(orthonormality_gap(&q) <= 1e-12);
        // A Q_k = P_k B_k
        let lhs = a.matrix() * &q;
        prop_assert!((lhs - &p * bk.view((0, 0), (p.ncols(), q.ncols()))).amax() <= 1e-12);
    }

    #[test]
    fn rational_basis_is_orthonormal_and_starts_with_b(seed in 0u64..1000, which in 0u8..4, k in 1usize..12) {
        let a = test_matrix(24, 20, seed, true);
        let b = random_vector(20, derive_seed(seed, 3));
        let poles = pole_choice(which, 0.01, 10.0, k);
        let arn = rational_arnoldi(&a, &b, &poles, k).unwrap();
        prop_assert!(orthonormality_gap(&arn.q) <= 1e-10);
        let q1 = arn.q.column(0);
        prop_assert!((q1 - &b / b.norm()).amax() <= 1e-14);
    }

    #[test]
    fn projected_singular_values_interlace(seed in 0u64..1000, which in 0u8..4, k in 1usize..12) {
        let a = test_matrix(30, 22, seed, true);
        let b = random_vector(22, derive_seed(seed, 3));
        let poles = pole_choice(which, 0.01, 10.0, k);
        let proj = project(&a, &rational_arnoldi(&a, &b, &poles, k).unwrap().q).unwrap();
        for s in proj.b.clone().svd(false, false).singular_values.iter() {
            prop_assert!(*s <= 10.0 * (1.0 + 1e-12) && *s >= 0.01 * (1.0 - 1e-10));
        }
    }

    #[test]
    fn short_recurrence_keeps_upper_triangular_band(seed in 0u64..1000, which in 0u8..4, k in 2usize..10) {
        let a = test_matrix(30, 30, seed, false);
        let b = random_vector(30, derive_seed(seed, 3));
        let poles = pole_choice(which, 0.5, 4.0, k);
        let run = rgk_run(&builtin("sqrt").unwrap(), &a, &b, &poles, k, &RunOptions::default()).unwrap();
        let dense = run.b.dense();
        for i in 0..dense.nrows() {
            for j in 0..i {
                prop_assert_eq!(dense[(i, j)], 0.0);
            }
        }
        prop_assert!(run.b.d.iter().all(|d| *d > 0.0));
    }

    #[test]
    fn generalized_function_commutes_with_transpose(m in 3usize..15, n in 3usize..15, seed in 0u64..1000) {
        let a = test_matrix(m, n, seed, true);
        let f = builtin("sqrt").unwrap();
        let left = gmf_dense(&f, a.matrix()).unwrap().transpose();
        let right = gmf_dense(&f, &a.matrix().transpose()).unwrap();
        prop_assert!((left - right).amax() <= 1e-12);
        let ident = gmf_dense(&builtin("identity").unwrap(), a.matrix()).unwrap();
        prop_assert!((ident - a.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn cyclic_poles_repeat(len in 1usize..8, j in 0usize..100) {
        let poles: Vec<Pole> = (0..len).map(|i| Pole::Finite(-(i as f64) - 1.0)).collect();
        let seq = PoleSequence::new(poles, gmf_core::PoleKind::Explicit).unwrap();
        prop_assert_eq!(seq.get(j), seq.get(j + len));
        prop_assert_eq!(seq.take(j).len(), j);
    }

    #[test]
    fn poles_inside_spectrum_are_rejected(lo in 0.01f64..1.0, width in 0.1f64..10.0, t in 0.0f64..=1.0) {
        let hi = lo + width;
        let inside = Pole::Finite(lo + t * (hi - lo));
        let seq = PoleSequence::new(vec![Pole::Infinite, inside], gmf_core::PoleKind::Explicit).unwrap();
        prop_assert!(seq.validate_against(lo, hi).is_err());
        let outside = PoleSequence::new(vec![Pole::Finite(-lo)], gmf_core::PoleKind::Explicit).unwrap();
        prop_assert!(outside.validate_against(lo, hi).is_ok());
    }

    #[test]
    fn shift_invert_rate_is_a_contraction(smin in 1e-3f64..1.0, ratio in 1.01f64..1e4, scale in 1e-3f64..1e3) {
        let smax = smin * ratio;
        let rho = rho_of(smin, smax, -scale * smin * smax).unwrap();
        prop_assert!(rho > 0.0 && rho < 1.0);
        let best = rho_of(smin, smax, -smin * smax).unwrap();
        prop_assert!(best <= rho * (1.0 + 1e-12));
    }

    #[test]
    fn dat_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL, 1..40), digits in 1usize..=17) {
        let points: Vec<(usize, f64)> = values.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
        let parsed = parse_dat(&render_dat(&points, digits)).unwrap();
        prop_assert_eq!(parsed.len(), points.len());
        for ((k0, v0), (k1, v1)) in points.iter().zip(&parsed) {
            prop_assert_eq!(k0, k1);
            prop_assert_eq!(format_sci(*v0, digits), format_sci(*v1, digits));
            if digits == 17 {
                prop_assert_eq!(v0, v1);
            }
        }
    }
}
