use rwre::rng::derive_seed;
use rwre::stats::ks_two_sample;
use rwre::walk::{hitting_time, hitting_time_seeded, run_to_time_seeded, verify_identity, SiteStacks};
use rwre::EnvironmentModel;

const CAP: u64 = 20_000_000;

fn two_point(seed: u64) -> EnvironmentModel {
    EnvironmentModel::make_iid_two_point(2.0 / 3.0, 1.0 / 3.0, 0.4, seed).unwrap()
}

#[test]
fn identity_and_parity_on_many_records() {
    let markov =
        EnvironmentModel::make_markov_finite(vec![1.0 / 3.0, 2.0 / 3.0], vec![vec![0.8, 0.2], vec![0.1, 0.9]], 3)
            .unwrap();
    for model in [two_point(3), markov] {
        let mut finished = 0;
        for r in 0..1000u64 {
            let env = model.realize_with_seed(r);
            let target = 1 + (r % 40) as i64;
            let rec = hitting_time_seeded(&env, target, CAP, derive_seed(r, &[7]));
            if rec.capped() {
                assert!(!verify_identity(&rec));
                continue;
            }
            finished += 1;
            assert!(verify_identity(&rec), "replica {r}");
            let t = rec.hitting_time.unwrap();
            assert_eq!(t % 2, target as u64 % 2);
            assert!(rec.left_counts.keys().next_back().copied().unwrap_or(0) < target);
        }
        // the Markov model has kappa near 0.17, so a few percent of runs hit the cap
        assert!(finished >= 900, "only {finished} finished");
    }
}

#[test]
fn position_parity_matches_time() {
    let model = two_point(8);
    for r in 0..200u64 {
        let n = 1 + r * 37;
        let s = run_to_time_seeded(&model.realize_with_seed(r), n, r);
        assert_eq!(s.position.rem_euclid(2) as u64, n % 2);
        assert!(s.min_position <= s.position.min(0) && s.max_position >= s.position.max(0));
    }
}

#[test]
fn site_stack_coupling_is_monotone() {
    // same state sequence, larger omega at every site
    let slow = EnvironmentModel::make_iid_discrete(vec![1.0 / 3.0, 2.0 / 3.0], vec![0.4, 0.6], 11).unwrap();
    let fast = EnvironmentModel::iid_unchecked(vec![0.4, 0.7], vec![0.4, 0.6], 11).unwrap();
    for r in 0..300u64 {
        let (a, b) = (slow.realize_with_seed(r), fast.realize_with_seed(r));
        assert_eq!(a.states(-200, 200), b.states(-200, 200));
        let ta = hitting_time(&a, 30, 100 * CAP, &mut SiteStacks::new(r)).hitting_time.unwrap();
        let tb = hitting_time(&b, 30, 100 * CAP, &mut SiteStacks::new(r)).hitting_time.unwrap();
        assert!(tb <= ta, "replica {r}: {tb} > {ta}");
    }
}

#[test]
fn left_crossings_at_site_one_have_mean_rho() {
    let env = EnvironmentModel::constant(2.0 / 3.0, 0).unwrap().realize();
    let samples = 200_000u64;
    let total: u64 = (0..samples)
        .map(|r| hitting_time_seeded(&env, 2, u64::MAX, r).left_counts.get(&1).copied().unwrap_or(0))
        .sum();
    let mean = total as f64 / samples as f64;
    // geometric with odds 1/2: variance 3/4
    let sd = (0.75 / samples as f64).sqrt();
    assert!((mean - 0.5).abs() < 4.0 * sd, "mean {mean}");
}

#[test]
fn minimum_stays_tight() {
    let model = two_point(5);
    let deep_fraction = |target: i64| {
        let deep = (0..1000u64)
            .filter(|&r| {
                let seed = derive_seed(r, &[target as u64]);
                let rec = hitting_time_seeded(&model.realize_with_seed(seed), target, CAP, seed);
                rec.min_position < -60
            })
            .count();
        deep as f64 / 1000.0
    };
    let (near, far) = (deep_fraction(100), deep_fraction(1000));
    assert!(near < 0.15 && far < 0.15, "{near} {far}");
    assert!((far - near).abs() < 0.05, "{near} {far}");
}

#[test]
fn left_tail_law_settles_in_target() {
    let model = two_point(6);
    let sample = |target: i64, salt: u64| -> Vec<f64> {
        (0..2000u64)
            .map(|r| {
                let seed = derive_seed(r, &[salt]);
                hitting_time_seeded(&model.realize_with_seed(seed), target, CAP, seed).left_tail_mass() as f64
            })
            .collect()
    };
    let (d, p) = ks_two_sample(&sample(50, 1), &sample(200, 2));
    assert!(p > 0.001, "D = {d}, p = {p}");
}
