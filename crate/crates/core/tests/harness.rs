use std::process::Command;

use rwre::env::{ModelKind, ModelSpec};
use rwre::harness::{
    self, read_scaling_csv, scaling_csv, summarize, ExperimentConfig, ExperimentKind, ExperimentOutput, FitStatus,
    Format, ScalingResult,
};

fn two_point_spec() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::IidTwoPoint,
        omega_states: vec![1.0 / 3.0, 2.0 / 3.0],
        weights: Some(vec![0.4, 0.6]),
        transition: None,
        seed: 1,
        bypass_admissibility: false,
    }
}

fn config(kind: ExperimentKind, sizes: Vec<u64>, replicas: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment: kind,
        model: two_point_spec(),
        sizes,
        replicas,
        seed: 42,
        model_id: Some("two_point_q04".into()),
        step_cap_factor: Some(100.0),
        truncation_depth: Some(200),
        audit_cases: Some(50),
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn emitted(output: &ExperimentOutput, format: Format) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    output
        .emit(format, dir.path())
        .unwrap()
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let configs = [
        config(ExperimentKind::WalkExponent, vec![1000, 4000], 16),
        config(ExperimentKind::HittingExponent, vec![16, 32, 64], 16),
        config(ExperimentKind::ZsumExponent, vec![64, 256, 1024], 16),
        config(ExperimentKind::GenfnAudit, vec![], 1),
        config(ExperimentKind::Spectrum, vec![], 20),
    ];
    for c in &configs {
        let one = in_pool(1, || harness::run(c).unwrap());
        let four = in_pool(4, || harness::run(c).unwrap());
        for format in [Format::Csv, Format::Json] {
            assert_eq!(emitted(&one, format), emitted(&four, format), "{:?}", c.experiment);
        }
    }
}

#[test]
fn json_round_trip() {
    let r = harness::run_zsum_exponent(&config(ExperimentKind::ZsumExponent, vec![32, 64, 128], 10)).unwrap();
    let out = ExperimentOutput::Scaling(r.clone());
    let bytes = &emitted(&out, Format::Json)[0];
    let back: ScalingResult = serde_json::from_slice(bytes).unwrap();
    assert_eq!(back, r);
}

#[test]
fn summary_recomputes_from_csv_rows() {
    let r = harness::run_walk_exponent(&config(ExperimentKind::WalkExponent, vec![500, 1000, 2000], 21)).unwrap();
    let rows = read_scaling_csv(&scaling_csv(&r).unwrap()).unwrap();
    assert_eq!(rows, r.rows);
    assert_eq!(summarize(&rows), r.summary);
    assert!(ExperimentOutput::Scaling(r.clone()).invariant_breaches().is_empty());
    let mut tampered = r;
    tampered.summary[0].median += 1e-9;
    assert!(!ExperimentOutput::Scaling(tampered).invariant_breaches().is_empty());
}

#[test]
fn partial_reruns_reproduce_subsets() {
    let full = harness::run_zsum_exponent(&config(ExperimentKind::ZsumExponent, vec![64, 128, 256], 6)).unwrap();
    let part = harness::run_zsum_exponent(&config(ExperimentKind::ZsumExponent, vec![128], 3)).unwrap();
    for row in &part.rows {
        assert!(full.rows.contains(row), "{row:?}");
    }
}

#[test]
fn grid_guards() {
    let one = harness::run_zsum_exponent(&config(ExperimentKind::ZsumExponent, vec![100], 4)).unwrap();
    assert_eq!(one.fit_status, FitStatus::InsufficientGrid);
    assert_eq!(one.rows.len(), 4);
    let two = harness::run_zsum_exponent(&config(ExperimentKind::ZsumExponent, vec![100, 200], 4)).unwrap();
    assert_eq!(two.fit_status, FitStatus::LowConfidence);
    assert!(two.fit.is_some());
    let bad = config(ExperimentKind::HittingExponent, vec![64, 32], 4);
    assert!(harness::run_hitting_exponent(&bad).is_err());
}

#[test]
fn walk_bracket_probes_are_reported() {
    let r = harness::run_walk_exponent(&config(ExperimentKind::WalkExponent, vec![1000, 10000], 40)).unwrap();
    let kappa = r.kappa.unwrap();
    assert_eq!(r.brackets.len(), 4);
    for b in &r.brackets {
        assert!((b.alpha - kappa).abs() > 0.1);
        assert!((0.0..=1.0).contains(&b.fraction));
    }
    let below: Vec<f64> = r.brackets.iter().filter(|b| b.alpha < kappa).map(|b| b.fraction).collect();
    let above: Vec<f64> = r.brackets.iter().filter(|b| b.alpha > kappa).map(|b| b.fraction).collect();
    assert!(below.iter().zip(&above).all(|(b, a)| b >= a));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rwre")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("zsum.json");
    let mut c = config(ExperimentKind::ZsumExponent, vec![32, 64], 4);
    std::fs::write(&cfg_path, serde_json::to_string(&c).unwrap()).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = cfg_path.to_str().unwrap();
    for out in [&out_a, &out_b] {
        let o = cli(&["zsum-exponent", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(out_a.join("zsum_exponent.csv")).unwrap();
    assert_eq!(a, std::fs::read(out_b.join("zsum_exponent.csv")).unwrap());
    assert!(a.starts_with(b"experiment,model_id,size,replica,statistic,flag\n"));

    // --seed and --replicas override the file
    c.seed = 3;
    c.replicas = 2;
    let o = cli(&[
        "zsum-exponent",
        "--config",
        cfg,
        "--out",
        out_a.to_str().unwrap(),
        "--seed",
        "3",
        "--replicas",
        "2",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let json: ScalingResult = serde_json::from_slice(&std::fs::read(out_a.join("zsum_exponent.json")).unwrap()).unwrap();
    assert_eq!(json, harness::run_zsum_exponent(&c).unwrap());

    // wrong subcommand for the config, missing file, non-increasing grid
    assert_eq!(cli(&["walk-exponent", "--config", cfg]).status.code(), Some(1));
    assert_eq!(cli(&["spectrum", "--config", "/nonexistent.json"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    let mut b = config(ExperimentKind::HittingExponent, vec![8, 8], 1);
    b.model_id = None;
    std::fs::write(&bad, serde_json::to_string(&b).unwrap()).unwrap();
    assert_eq!(cli(&["hitting-exponent", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    // a model that fails the admissibility gate is a config error
    let mut ballistic = config(ExperimentKind::Spectrum, vec![], 1);
    ballistic.model.weights = Some(vec![0.1, 0.9]);
    std::fs::write(&bad, serde_json::to_string(&ballistic).unwrap()).unwrap();
    assert_eq!(cli(&["spectrum", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn spectrum_csv_marks_infinite_rate() {
    let out = harness::run(&config(ExperimentKind::Spectrum, vec![], 10)).unwrap();
    let files = emitted(&out, Format::Csv);
    let lambda = String::from_utf8(files[0].clone()).unwrap();
    let rate = String::from_utf8(files[1].clone()).unwrap();
    assert!(lambda.starts_with("lambda,Lambda\n0,0\n"));
    assert!(rate.starts_with("x,J\n"));
    assert!(rate.lines().any(|l| l.ends_with(",inf")));
    assert!(out.invariant_breaches().is_empty());
}
