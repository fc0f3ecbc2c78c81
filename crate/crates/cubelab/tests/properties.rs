//! Randomized invariants checked with proptest.

use proptest::prelude::*;

use cubelab::designs::{bch_family, rademacher_family, FieldSpec};
use cubelab::hypercube::{
    conditional_expectation, fwht_forward, fwht_inverse, lp_norm, CoordinateSet,
    HypercubeFunction,
};
use cubelab::lambda::moment_norm;
use cubelab::operators::{
    adjoint_norm_linf, modulus, operator_norm_l1, AtomicMeasureSpace, L1Operator,
};
use cubelab::separation::{distance_to_symmetric_hull, DistanceMethod};

fn func(n: usize) -> impl Strategy<Value = HypercubeFunction> {
    prop::collection::vec(-10.0f64..10.0, 1usize << n)
        .prop_map(move |v| HypercubeFunction::new(n, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fwht_roundtrip((_n, seedless) in (1usize..=8).prop_flat_map(|n| (Just(n), func(n)))) {
        let back = fwht_inverse(&fwht_forward(&seedless));
        for (a, b) in seedless.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn parseval((_n, f) in (1usize..=8).prop_flat_map(|n| (Just(n), func(n)))) {
        let pts = f.len();
        let e2: f64 = f.values().iter().map(|x| x * x).sum::<f64>() / pts as f64;
        let c2: f64 = fwht_forward(&f).coeffs().iter().map(|x| x * x).sum();
        prop_assert!((e2 - c2).abs() <= 1e-9 * (1.0 + e2));
    }

    #[test]
    fn conditional_expectation_idempotent_and_contractive(
        (_n, f, mask) in (2usize..=8).prop_flat_map(|n| {
            (Just(n), func(n), 0u32..(1u32 << n))
        })
    ) {
        let set = CoordinateSet(mask);
        let once = conditional_expectation(&f, set).unwrap();
        let twice = conditional_expectation(&once, set).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for p in [1.0, 2.0, 4.0] {
            prop_assert!(lp_norm(&once, p).unwrap() <= lp_norm(&f, p).unwrap() + 1e-10);
        }
    }

    #[test]
    fn lp_norms_are_monotone_in_p((_n, f) in (1usize..=8).prop_flat_map(|n| (Just(n), func(n)))) {
        let n1 = lp_norm(&f, 1.0).unwrap();
        let n2 = lp_norm(&f, 2.0).unwrap();
        let n4 = lp_norm(&f, 4.0).unwrap();
        prop_assert!(n1 <= n2 + 1e-10 && n2 <= n4 + 1e-10);
    }

    #[test]
    fn modulus_preserves_norm_and_duality_holds(
        matrix in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 4)
    ) {
        let t = L1Operator::new(
            AtomicMeasureSpace::uniform(6).unwrap(),
            AtomicMeasureSpace::uniform(4).unwrap(),
            matrix,
        ).unwrap();
        let n1 = operator_norm_l1(&t);
        prop_assert_eq!(operator_norm_l1(&modulus(&t)), n1);
        prop_assert!((n1 - adjoint_norm_linf(&t)).abs() <= 1e-12 * n1.max(1.0));
    }

    #[test]
    fn hull_distance_is_1_lipschitz_and_dominated(
        (vals, shift, cols) in (
            prop::collection::vec(-2.0f64..2.0, 16),
            prop::collection::vec(-0.05f64..0.05, 16),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 16), 1..=3),
        )
    ) {
        let n = 4usize;
        let v = HypercubeFunction::new(n, vals.clone()).unwrap();
        let v2 = HypercubeFunction::new(
            n,
            vals.iter().zip(&shift).map(|(a, d)| a + d).collect(),
        ).unwrap();
        let columns: Vec<HypercubeFunction> = cols
            .into_iter()
            .map(|c| HypercubeFunction::new(n, c).unwrap())
            .collect();
        let d1 = distance_to_symmetric_hull(&v, &columns, DistanceMethod::Simplex).unwrap();
        let d2 = distance_to_symmetric_hull(&v2, &columns, DistanceMethod::Simplex).unwrap();
        let perturb: f64 = shift.iter().map(|d| d.abs()).sum::<f64>() / 16.0;
        prop_assert!((d1.distance - d2.distance).abs() <= perturb + 1e-9);
        // lambda = 0 is always feasible
        prop_assert!(d1.distance <= lp_norm(&v, 1.0).unwrap() + 1e-9);
    }

    #[test]
    fn rademacher_fourth_moment_identity(
        coeffs in prop::collection::vec(-3.0f64..3.0, 10)
    ) {
        let fam = rademacher_family(10).unwrap();
        let m4 = moment_norm(&fam, &coeffs, 4).unwrap().powi(4);
        let s2: f64 = coeffs.iter().map(|x| x * x).sum();
        let s4: f64 = coeffs.iter().map(|x| x.powi(4)).sum();
        prop_assert!((m4 - (3.0 * s2 * s2 - 2.0 * s4)).abs() <= 1e-9 * (1.0 + m4));
    }

    #[test]
    fn bch_pairing_moment_bound(coeffs in prop::collection::vec(-3.0f64..3.0, 15)) {
        // a 4-independent family matches the Rademacher fourth moment, so the
        // pairing bound 3 ||a||_2^4 applies verbatim
        let fam = bch_family(&FieldSpec::default_for(4).unwrap(), 2).unwrap();
        let m4 = moment_norm(&fam, &coeffs, 4).unwrap().powi(4);
        let s2: f64 = coeffs.iter().map(|x| x * x).sum();
        prop_assert!(m4 <= 3.0 * s2 * s2 + 1e-9 * (1.0 + m4));
    }
}
