mod common;

use common::*;
use ccrf::crf;
use proptest::prelude::*;

#[test]
fn map_solution_satisfies_system_and_minimizes_energy() {
    let mut rng = rng(10);
    for i in 0..40 {
        let (residual, increase) = inference_exactness(&mut rng);
        assert!(residual < 1e-9, "instance {i}: residual {residual:e}");
        assert!(increase > 0.0, "instance {i}: energy dropped by {:e}", -increase);
    }
}

#[test]
fn blockwise_solve_equals_explicit_kronecker_system() {
    let mut rng = rng(11);
    for i in 0..50 {
        let d = kronecker_difference(&mut rng);
        assert!(d < 1e-10, "instance {i}: difference {d:e}");
    }
}

#[test]
fn precision_eigenvalues_are_bounded() {
    let mut rng = rng(12);
    for _ in 0..30 {
        assert!(eigen_bounds_hold(&mut rng));
    }
}

#[test]
fn normalizer_matches_quadrature() {
    let mut rng = rng(13);
    for i in 0..5 {
        let e = quadrature_rel_err(&mut rng);
        assert!(e < 1e-4, "instance {i}: relative error {e:e}");
    }
}

#[test]
fn zero_affinity_returns_unaries() {
    let mut rng = rng(14);
    let z = uniform(6, 3, -1.0, 1.0, &mut rng);
    let s = crf::assemble(ndarray::Array2::zeros((6, 6)).view()).unwrap();
    assert_eq!(crf::map_infer(&s, z.view()).unwrap(), z);
    assert_eq!(s.logdet_a0(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn map_is_linear_in_unaries(seed in 0u64..10_000, a in -3.0f64..3.0) {
        let mut rng = rng(seed);
        let r = affinity(5, 0.0, 2.0, &mut rng);
        let z1 = uniform(5, 2, -1.0, 1.0, &mut rng);
        let z2 = uniform(5, 2, -1.0, 1.0, &mut rng);
        let s = crf::assemble(r.view()).unwrap();
        let combined = crf::map_infer(&s, (&z1 * a + &z2).view()).unwrap();
        let separate = crf::map_infer(&s, z1.view()).unwrap() * a + crf::map_infer(&s, z2.view()).unwrap();
        for (u, v) in combined.iter().zip(separate.iter()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_unaries_are_fixed_points(seed in 0u64..10_000, c in -5.0f64..5.0) {
        // A0 has the all-ones vector as an eigenvector with eigenvalue 1.
        let mut rng = rng(seed);
        let r = affinity(7, 0.0, 3.0, &mut rng);
        let s = crf::assemble(r.view()).unwrap();
        let z = ndarray::Array2::from_elem((7, 1), c);
        let y = crf::map_infer(&s, z.view()).unwrap();
        prop_assert!(y.iter().all(|v| (v - c).abs() < 1e-12 * (1.0 + c.abs())));
    }

    #[test]
    fn logdet_is_nonnegative_and_monotone_in_affinity(seed in 0u64..10_000) {
        let mut rng = rng(seed);
        let r = affinity(6, 0.0, 1.0, &mut rng);
        let s1 = crf::assemble(r.view()).unwrap();
        let s2 = crf::assemble((&r * 2.0).view()).unwrap();
        prop_assert!(s1.logdet_a0() >= 0.0);
        prop_assert!(s2.logdet_a0() >= s1.logdet_a0() - 1e-12);
    }
}
