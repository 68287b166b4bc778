use proptest::prelude::*;

use rwre::branching::{b_recursion, b_summed, log_b_of, phi_product_of};
use rwre::spectrum::{kappa_root, lambda_fn, rate_function};
use rwre::stats::{quantile_sorted, sorted};
use rwre::walk::{hitting_time_seeded, run_to_time_seeded, verify_identity};
use rwre::EnvironmentModel;

fn iid_model() -> impl Strategy<Value = EnvironmentModel> {
    (2usize..=4)
        .prop_flat_map(|k| (prop::collection::vec(0.05f64..0.95, k), prop::collection::vec(0.05f64..1.0, k)))
        .prop_map(|(omegas, raw)| {
            let total: f64 = raw.iter().sum();
            let weights = raw.iter().map(|w| w / total).collect();
            EnvironmentModel::iid_unchecked(omegas, weights, 0).unwrap()
        })
}

fn two_point_admissible() -> impl Strategy<Value = EnvironmentModel> {
    // rho in {a, 1/a}; transient with E rho >= 1 needs q < 1/2 and a large enough
    (0.1f64..0.45, 1.5f64..6.0).prop_filter_map("zero-speed regime", |(q, a)| {
        let lo = 1.0 / (1.0 + a);
        let hi = a / (1.0 + a);
        EnvironmentModel::make_iid_two_point(hi, lo, q, 0).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_convex_and_vanishes_at_zero(model in iid_model(), a in 0.0f64..3.0, b in 0.0f64..3.0, t in 0.0f64..1.0) {
        prop_assert_eq!(lambda_fn(&model, 0.0), 0.0);
        let mid = lambda_fn(&model, t * a + (1.0 - t) * b);
        let chord = t * lambda_fn(&model, a) + (1.0 - t) * lambda_fn(&model, b);
        prop_assert!(mid <= chord + 1e-12);
        // Jensen
        prop_assert!(lambda_fn(&model, a) >= a * model.mean_log_rho() - 1e-12);
    }

    #[test]
    fn kappa_separates_signs(model in two_point_admissible(), lam in 0.01f64..2.0) {
        let k = kappa_root(&model).unwrap();
        prop_assert!(k.kappa > 0.0 && k.kappa <= 1.0 + 1e-12);
        prop_assert!(lambda_fn(&model, k.kappa).abs() < 1e-9);
        if (lam - k.kappa).abs() > 1e-6 {
            prop_assert_eq!(lambda_fn(&model, lam) > 0.0, lam > k.kappa);
        }
    }

    #[test]
    fn rate_function_nonnegative(model in two_point_admissible(), x in -2.0f64..2.0) {
        prop_assert!(rate_function(&model, x) >= 0.0);
    }

    #[test]
    fn generating_functions_are_consistent(rhos in prop::collection::vec(0.1f64..4.0, 1..60), s in 0.0f64..=1.0) {
        let n = rhos.len();
        let phi = phi_product_of(&rhos, s);
        prop_assert!(phi > 0.0 && phi <= 1.0);
        let rec = b_recursion(&rhos, n, s).unwrap();
        let sum = b_summed(&rhos, n, s).unwrap();
        prop_assert!((rec - sum).abs() <= 1e-11 * sum);
        prop_assert!((phi * rec - 1.0).abs() <= 1e-10);
        let lb = log_b_of(&rhos, s);
        prop_assert!(lb >= 0.0);
        prop_assert!(((-lb).exp() - phi).abs() <= 1e-10 * phi);
        let s2 = (s + 0.1).min(1.0);
        prop_assert!(phi_product_of(&rhos, s2) >= phi);
    }

    #[test]
    fn hitting_identity_holds(model in two_point_admissible(), seed in any::<u64>(), target in 1i64..50) {
        let env = model.realize_with_seed(seed);
        let rec = hitting_time_seeded(&env, target, 5_000_000, seed);
        prop_assert_eq!(verify_identity(&rec), !rec.capped());
        prop_assert_eq!(rec.left_tail_mass() + rec.positive_left_moves(), rec.total_left_moves());
    }

    #[test]
    fn walk_stays_in_light_cone(model in iid_model(), seed in any::<u64>(), n in 0u64..5000) {
        let s = run_to_time_seeded(&model.realize_with_seed(seed), n, seed);
        prop_assert!(s.position.unsigned_abs() <= n);
        prop_assert_eq!((s.position + n as i64).rem_euclid(2), 0);
    }

    #[test]
    fn quantiles_are_ordered(xs in prop::collection::vec(-1e6f64..1e6, 1..200), p in 0.0f64..=1.0) {
        let v = sorted(&xs);
        let q = quantile_sorted(&v, p);
        prop_assert!(q >= v[0] && q <= v[v.len() - 1]);
        prop_assert!(quantile_sorted(&v, 0.25) <= quantile_sorted(&v, 0.75));
    }
}
