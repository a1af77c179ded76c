use std::collections::BTreeMap;
use std::sync::Arc;

use adaptrial::estimator::{EstimatorOptions, Lags, Method};
use adaptrial::glm::{DesignSpec, Frame};
use adaptrial::monitoring::ThetaMode;
use adaptrial::sim::{
    compute_r_squared, generate_trial, interim_look, replication_rng, run_monte_carlo, run_replication, BoundaryConfig,
    CovariateSource, InterimTrigger, LinearPredictor, Parallelism, Scenario, ScenarioConfig, SsrConfig,
    WorkingModelsConfig,
};
use adaptrial::Error;

fn lp(intercept: f64, terms: &[(&str, f64)]) -> LinearPredictor {
    LinearPredictor {
        intercept,
        coefficients: terms
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
        scaled: vec![],
    }
}

fn config() -> ScenarioConfig {
    ScenarioConfig {
        name: None,
        n_per_arm: 120,
        alpha: 0.025,
        beta: 0.1,
        recruitment_rate: 12.0,
        lags: Lags { x: 112.0, y: 420.0 },
        covariates: CovariateSource::Builtin,
        x_model: Some(lp(-0.3, &[("z1", 0.6), ("z2", 0.4)])),
        y_model: lp(-1.0, &[("x", 2.0), ("z1", 0.35), ("a", 0.2)]),
        c: 1.0,
        working_models: WorkingModelsConfig {
            h: "y ~ x + z1".into(),
            f: "y ~ z1".into(),
            h0: None,
            f0: None,
        },
        interim: InterimTrigger::TargetInformation(0.5),
        boundary: BoundaryConfig::ObrienFleming,
        cp_theta: ThetaMode::Design,
        ssr: SsrConfig {
            enabled: true,
            ..SsrConfig::default()
        },
        combination_weight: None,
        method: Method::Proposal,
        estimator: EstimatorOptions::default(),
        blinded: true,
        plot_grid: vec![],
        seed: 99,
    }
}

fn scenario() -> Scenario {
    config().compile().unwrap()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = scenario();
    let a = run_monte_carlo(&s, 40, Parallelism::Sequential).unwrap();
    let b = run_monte_carlo(&s, 40, Parallelism::Threads(4)).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.characteristics, b.characteristics);
}

#[test]
fn single_replication_summary() {
    let run = run_monte_carlo(&scenario(), 1, Parallelism::Sequential).unwrap();
    assert_eq!(run.records.len(), 1);
    let q = run.characteristics.sample_size_quantiles;
    assert!(q.iter().all(|&v| v == q[0]));
}

#[test]
fn quantiles_are_ordered_and_rates_valid() {
    let oc = run_monte_carlo(&scenario(), 60, Parallelism::Sequential)
        .unwrap()
        .characteristics;
    assert!(oc.sample_size_quantiles.windows(2).all(|w| w[0] <= w[1]));
    for r in [
        oc.stop_futility_rate,
        oc.reject_rate_fixed,
        oc.reject_rate_no_ssr,
        oc.reject_rate_ssr,
        oc.power_loss,
    ] {
        assert!((0.0..=1.0).contains(&r));
    }
    let sw = &oc.switch_rates;
    let net = (sw.gained as f64 - sw.lost as f64) / oc.reps as f64;
    assert!((oc.reject_rate_ssr - oc.reject_rate_no_ssr - net).abs() < 1e-12);
}

#[test]
fn fixed_thresholds_zero_and_one() {
    let mut cfg = config();
    cfg.boundary = BoundaryConfig::FixedCp { gamma: 0.0 };
    let never = run_monte_carlo(&cfg.compile().unwrap(), 30, Parallelism::Sequential).unwrap();
    assert_eq!(never.characteristics.stop_futility_rate, 0.0);
    cfg.boundary = BoundaryConfig::FixedCp { gamma: 1.0 };
    let always = run_monte_carlo(&cfg.compile().unwrap(), 30, Parallelism::Sequential).unwrap();
    assert_eq!(always.characteristics.stop_futility_rate, 1.0);
    assert!(always
        .records
        .iter()
        .all(|r| r.ss_ssr == r.n_recruited && !r.reject_ssr));
}

#[test]
fn degenerate_outcome_exhausts_the_failure_budget() {
    let mut cfg = config();
    cfg.y_model = lp(-30.0, &[]);
    let s = cfg.compile().unwrap();
    let data = generate_trial(&s, &mut replication_rng(1, 0), 200);
    assert!((0..200).all(|i| data.y(i) == Some(0.0)));
    match run_monte_carlo(&s, 20, Parallelism::Sequential) {
        Err(Error::FailureBudgetExceeded { failures, budget, .. }) => {
            assert_eq!(failures, 20);
            assert_eq!(budget, 0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn early_patients_do_not_depend_on_trial_length() {
    let s = scenario();
    let short = generate_trial(&s, &mut replication_rng(5, 3), 50);
    let long = generate_trial(&s, &mut replication_rng(5, 3), 400);
    for i in 0..50 {
        assert_eq!(short.record(i), long.record(i));
    }
}

#[test]
fn information_grows_with_calendar_time() {
    let s = scenario();
    for rep in 0..25 {
        let data = Arc::new(generate_trial(
            &s,
            &mut replication_rng(s.config.seed, rep),
            s.cap_total,
        ));
        let mut last = 0.0;
        let mut day = 700.0;
        while day < 1800.0 {
            if let Ok(look) = interim_look(&s, Arc::clone(&data), Method::Standard, day) {
                assert!(look.t >= last - 1e-6, "rep {rep} day {day}: {} < {last}", look.t);
                last = look.t;
            }
            day += 30.0;
        }
    }
}

#[test]
fn replication_record_is_consistent() {
    let s = scenario();
    let r = run_replication(&s, 0).unwrap();
    assert!((r.b_t - r.z_t * r.t.min(1.0 - 1e-9).sqrt()).abs() < 1e-12);
    assert!((r.diff - (r.mu1 - r.mu0)).abs() < 1e-15);
    assert!(r.n_ssr >= r.n_recruited && r.n_ssr <= s.cap_total);
}

#[test]
fn r_squared_split_is_additive() {
    let n = 400;
    let z1: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let x: Vec<f64> = (0..n)
        .map(|i| f64::from(u8::from((i * 7 + i / 5) % 4 < 2 - (i % 3 == 0) as usize)))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| f64::from(u8::from((i * 13 + 5) % 7 < 2 + 2 * x[i] as usize + z1[i] as usize)))
        .collect();
    let frame = Frame::new(n).with_column("z1", z1).with_column("x", x);
    let full = DesignSpec::parse_rhs("x + z1").unwrap();
    let zonly = DesignSpec::parse_rhs("z1").unwrap();
    let r = compute_r_squared(&frame, &y, &full, &zonly).unwrap();
    assert!(r.r2_x > 0.0 && r.r2_z > 0.0);
    assert!((r.r2_x + r.r2_z - r.r2_total).abs() < 1e-10);

    let r = compute_r_squared(&frame, &y, &zonly, &zonly).unwrap();
    assert_eq!(r.r2_x, 0.0);
    assert!((r.r2_z - r.r2_total).abs() < 1e-15);
}
