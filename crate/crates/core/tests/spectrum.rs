use rwre::spectrum::{kappa_root, kappa_via_rate, lambda_fn, rate_function, slope_range, spectrum_report, SpectrumOptions};
use rwre::EnvironmentModel;

fn two_point() -> EnvironmentModel {
    EnvironmentModel::make_iid_two_point(2.0 / 3.0, 1.0 / 3.0, 0.4, 1).unwrap()
}

fn markov() -> EnvironmentModel {
    EnvironmentModel::make_markov_finite(vec![1.0 / 3.0, 2.0 / 3.0], vec![vec![0.8, 0.2], vec![0.1, 0.9]], 1).unwrap()
}

/// `(1/n) log E prod_{i<n} rho_i^lam` by propagating the stationary start through `n` sites.
fn finite_n_lambda(p: [[f64; 2]; 2], pi: [f64; 2], rho: [f64; 2], lam: f64, n: usize) -> f64 {
    let w = [rho[0].powf(lam), rho[1].powf(lam)];
    let mut v = [pi[0] * w[0], pi[1] * w[1]];
    let mut log_scale = 0.0;
    for _ in 1..n {
        let next = [
            (v[0] * p[0][0] + v[1] * p[1][0]) * w[0],
            (v[0] * p[0][1] + v[1] * p[1][1]) * w[1],
        ];
        let s = next[0] + next[1];
        log_scale += s.ln();
        v = [next[0] / s, next[1] / s];
    }
    (log_scale + (v[0] + v[1]).ln()) / n as f64
}

#[test]
fn markov_lambda_matches_finite_n_transfer() {
    let m = markov();
    let p = [[0.8, 0.2], [0.1, 0.9]];
    for lam in [0.1, 0.3, 0.5, 1.0, 1.5] {
        let oracle = finite_n_lambda(p, [1.0 / 3.0, 2.0 / 3.0], [2.0, 0.5], lam, 2000);
        let got = lambda_fn(&m, lam);
        assert!((got - oracle).abs() < 1e-3, "lambda {lam}: {got} vs {oracle}");
    }
}

#[test]
fn markov_lambda_matches_monte_carlo() {
    let m = markov();
    let n = 200;
    let replicas = 20_000u64;
    let logs: Vec<f64> = (0..replicas)
        .map(|r| m.realize_with_seed(r).rho_range(0, n).iter().map(|x| x.ln()).sum())
        .collect();
    // small lambda keeps the variance of prod rho^lambda manageable
    for lam in [0.05, 0.1] {
        let mean = logs.iter().map(|l| (lam * l).exp()).sum::<f64>() / replicas as f64;
        let mc = mean.ln() / n as f64;
        let exact = lambda_fn(&m, lam);
        assert!((mc - exact).abs() < 0.02, "lambda {lam}: mc {mc} vs {exact}");
    }
}

#[test]
fn markov_kappa_closed_form() {
    // Perron root 1 factors as (x - 1)(0.8 x - 0.9) = 0 in x = 2^lam
    let k = kappa_root(&markov()).unwrap();
    assert!((k.kappa - 1.125f64.log2()).abs() < 1e-10, "{}", k.kappa);
    assert!(!k.boundary);
    let r = kappa_via_rate(&markov());
    assert!((r.kappa - k.kappa).abs() < 1e-4);
}

#[test]
fn sign_property_on_grid() {
    for m in [two_point(), markov()] {
        let kappa = kappa_root(&m).unwrap().kappa;
        for k in 1..=40 {
            let lam = 0.05 * k as f64;
            if (lam - kappa).abs() <= 1e-6 {
                continue;
            }
            let v = lambda_fn(&m, lam);
            assert_eq!(v > 0.0, lam > kappa, "lambda {lam}: Lambda = {v}");
            assert!(v != 0.0);
        }
    }
}

#[test]
fn rate_function_shape() {
    for m in [two_point(), markov()] {
        let (lo, hi) = slope_range(&m);
        let mean = m.mean_log_rho();
        assert!(rate_function(&m, mean).abs() < 1e-8);
        assert!(rate_function(&m, 0.0) > 0.0);
        assert!(rate_function(&m, hi + 0.1).is_infinite());
        assert!(rate_function(&m, lo - 0.1).is_infinite());
        let xs: Vec<f64> = (0..=100).map(|k| lo + (hi - lo) * k as f64 / 100.0).collect();
        let js: Vec<f64> = xs.iter().map(|&x| rate_function(&m, x)).collect();
        assert!(js.iter().all(|&j| j >= 0.0));
        for w in js.windows(3) {
            if w.iter().all(|j| j.is_finite()) {
                assert!(w[0] - 2.0 * w[1] + w[2] > -1e-7, "J not convex: {w:?}");
            }
        }
    }
}

#[test]
fn reports_have_no_breaches() {
    for m in [two_point(), markov()] {
        let opts = SpectrumOptions {
            speed_replicas: 20,
            ..SpectrumOptions::default()
        };
        let r = spectrum_report(&m, &opts).unwrap();
        assert!(r.invariant_breaches().is_empty(), "{:?}", r.invariant_breaches());
        assert!(r.speed.diverged());
        let (lam, v) = r.negative_witness.unwrap();
        assert!(lam > 0.0 && v < 0.0);
    }
}
