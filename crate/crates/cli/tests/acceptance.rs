use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;

use adaptrial::adaptive::{
    combination_test, reassess_sample_size, second_stage_statistic, CombinationPlan, SsrRationale,
};
use adaptrial::estimator::{
    estimate_effect, Cohort, EstimatorOptions, InterimSnapshot, Method, TrialData, WorkingSpecs,
};
use adaptrial::glm::{fit_canonical_glm, normal, DesignSpec, Family, Frame};
use adaptrial::monitoring::{conditional_power, design_drift};
use adaptrial::sim::{
    compute_r_squared, generate_trial, replication_rng, run_monte_carlo, InterimTrigger, MonteCarloRun, Parallelism,
    Scenario, ScenarioConfig,
};

const REPS: usize = 2000;
const LARGE_REPS: usize = 5000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ScenarioConfig {
    let path = configs_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    toml::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn compile(cfg: &ScenarioConfig) -> Scenario {
    cfg.compile().expect("scenario compiles")
}

fn parallel() -> Parallelism {
    Parallelism::Threads(std::thread::available_parallelism().map_or(1, usize::from))
}

fn simulate(s: &Scenario, reps: usize) -> MonteCarloRun {
    run_monte_carlo(s, reps, parallel()).expect("simulation runs")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn type_one_error_with_ssr() -> Outcome {
    let oc = simulate(&compile(&load("ssr_null.toml")), REPS).characteristics;
    let rate = oc.reject_rate_ssr;
    outcome(
        (rate - 0.025).abs() <= 0.012,
        format!("rejection rate {rate:.4} (target 0.025 +/- 0.012)"),
    )
}

fn futility_runs() -> (MonteCarloRun, MonteCarloRun) {
    let s = compile(&load("futility_c2.toml"));
    let proposal = simulate(&s.with_method(Method::Proposal), REPS);
    let standard = simulate(&s.with_method(Method::Standard), REPS);
    (proposal, standard)
}

fn futility_stop_probability(runs: &(MonteCarloRun, MonteCarloRun)) -> Outcome {
    let p = runs.0.characteristics.stop_futility_rate;
    let s = runs.1.characteristics.stop_futility_rate;
    outcome(
        (p - 0.59).abs() <= 0.03 && (s - 0.59).abs() <= 0.03,
        format!(
            "stop probability proposal {:.1}%, standard {:.1}% (target 59 +/- 3)",
            100.0 * p,
            100.0 * s
        ),
    )
}

fn recruitment_gain(runs: &(MonteCarloRun, MonteCarloRun)) -> Outcome {
    let p = 100.0 * runs.0.characteristics.mean_fraction_recruited;
    let s = 100.0 * runs.1.characteristics.mean_fraction_recruited;
    let gap = s - p;
    outcome(
        (0.0..=6.0).contains(&gap),
        format!("recruited at interim proposal {p:.1}%, standard {s:.1}%, gap {gap:.2} points (target [0, 6])"),
    )
}

fn power_loss_bound() -> Outcome {
    let s = compile(&load("superiority_c2.toml"));
    let p = simulate(&s.with_method(Method::Proposal), REPS)
        .characteristics
        .power_loss;
    let st = simulate(&s.with_method(Method::Standard), REPS)
        .characteristics
        .power_loss;
    outcome(
        p <= 0.015 && st <= 0.015,
        format!(
            "power loss proposal {:.2}%, standard {:.2}% (bound 1.5%)",
            100.0 * p,
            100.0 * st
        ),
    )
}

fn generative_calibration() -> Outcome {
    let s = compile(&load("table1_c0.toml"));
    let data = generate_trial(&s, &mut replication_rng(s.config.seed, 0), 10_000);
    let rate = |arm: u8| {
        let ys: Vec<f64> = (0..data.len())
            .filter(|&i| data.arm(i) == arm)
            .map(|i| data.y(i).unwrap())
            .collect();
        mean(&ys)
    };
    let (p1, p0) = (rate(1), rate(0));
    outcome(
        (p1 - 0.63).abs() <= 0.02 && (p0 - 0.44).abs() <= 0.02,
        format!("P1 {p1:.3} (0.63 +/- 0.02), P0 {p0:.3} (0.44 +/- 0.02)"),
    )
}

fn r_squared_diagnostics() -> Outcome {
    let s = compile(&load("ssr_null.toml"));
    let data = generate_trial(&s, &mut replication_rng(s.config.seed, 0), 10_000);
    let n = data.len();
    let z1 = data.frame().column("z1").unwrap();
    let frame = Frame::new(n)
        .with_column("zb", z1.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect())
        .with_column("x", (0..n).map(|i| data.x(i).unwrap()).collect());
    let y: Vec<f64> = (0..n).map(|i| data.y(i).unwrap()).collect();
    let full = DesignSpec::parse_rhs("x + zb").unwrap();
    let zonly = DesignSpec::parse_rhs("zb").unwrap();
    let split = compute_r_squared(&frame, &y, &full, &zonly).unwrap();
    let gap = (split.r2_x + split.r2_z - split.r2_total).abs();

    let s = compile(&load("futility_c2.toml"));
    let data = generate_trial(&s, &mut replication_rng(s.config.seed, 0), 10_000);
    let control: Vec<usize> = (0..data.len()).filter(|&i| data.arm(i) == 0).collect();
    let frame = data.frame().select_rows(&control);
    let y: Vec<f64> = control.iter().map(|&i| data.y(i).unwrap()).collect();
    let spec = DesignSpec::parse_rhs("z1").unwrap();
    let r2 = compute_r_squared(&frame, &y, &spec, &spec).unwrap().r2_total;
    outcome(
        gap <= 1e-10 && (r2 - 0.20).abs() <= 0.03,
        format!("additivity gap {gap:.2e} (<= 1e-10), control-arm R2 {r2:.3} (0.20 +/- 0.03)"),
    )
}

fn variance_estimator_validity() -> Outcome {
    let mut cfg = load("futility_c2.toml");
    cfg.interim = InterimTrigger::RecruitedFraction(0.75);
    let run = simulate(&compile(&cfg), LARGE_REPS);
    let diffs: Vec<f64> = run.records.iter().map(|r| r.diff).collect();
    let s2: Vec<f64> = run.records.iter().map(|r| r.s2).collect();
    let (mc, est) = (variance(&diffs), mean(&s2));
    let rel = (est - mc).abs() / mc;
    outcome(
        rel <= 0.10,
        format!(
            "mean s2 {est:.3e}, Monte Carlo variance {mc:.3e}, relative error {:.1}% (<= 10%)",
            100.0 * rel
        ),
    )
}

fn independent_increments() -> Outcome {
    let run = simulate(&compile(&load("ssr_null.toml")), LARGE_REPS);
    let b_t: Vec<f64> = run.records.iter().map(|r| r.b_t).collect();
    let incr: Vec<f64> = run.records.iter().map(|r| r.z_final - r.b_t).collect();
    let z_t: Vec<f64> = run.records.iter().map(|r| r.z_t).collect();
    let z2: Vec<f64> = run.records.iter().map(|r| r.z2_planned).collect();
    let bound = 3.0 / (run.records.len() as f64).sqrt();
    let (rb, rz) = (correlation(&b_t, &incr), correlation(&z_t, &z2));
    outcome(
        rb.abs() <= bound && rz.abs() <= bound,
        format!("corr(B_t, B_1 - B_t) {rb:.4}, corr(Z_t, Z2) {rz:.4} (bound {bound:.4})"),
    )
}

fn robustness_under_misspecification() -> Outcome {
    let correct = simulate(&compile(&load("misspec_correct.toml")), REPS);
    let mis3 = simulate(&compile(&load("misspec_mis3.toml")), REPS);
    let diffs: Vec<f64> = mis3.records.iter().map(|r| r.diff).collect();
    let m = mean(&diffs);
    let se = (variance(&diffs) / diffs.len() as f64).sqrt();
    let (sc, sm) = (
        correct.characteristics.stop_futility_rate,
        mis3.characteristics.stop_futility_rate,
    );
    let spread = 100.0 * (sc - sm).abs();
    outcome(
        m.abs() <= 3.0 * se && spread <= 5.0,
        format!(
            "mean diff {m:.5} (true effect 0, 3 MC-SE {:.5}), stop correct {:.1}% vs misspecified {:.1}%, spread {spread:.1} points (<= 5)",
            3.0 * se,
            100.0 * sc,
            100.0 * sm
        ),
    )
}

fn complete_snapshot(arm: &[u8], y: &[u8], cohorts: Vec<Cohort>) -> InterimSnapshot {
    let n = arm.len();
    let z1: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
    let data = TrialData::new(
        (0..n).map(|i| format!("p{i}")).collect(),
        arm.to_vec(),
        Frame::new(n).with_column("z1", z1),
        Some((0..n).map(|i| Some(u8::from(i % 3 != 1))).collect()),
        y.iter().map(|&v| Some(v)).collect(),
        vec![0.0; n],
    )
    .unwrap();
    InterimSnapshot::with_cohorts(Arc::new(data), cohorts).unwrap()
}

fn algebraic_identities() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let n = 60;
    let arm: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    let y: Vec<u8> = (0..n).map(|i| u8::from((i * 7 + i / 3) % 5 < 2 + (i % 2))).collect();
    let specs = WorkingSpecs::shared(
        DesignSpec::parse_rhs("x + z1").unwrap(),
        DesignSpec::parse_rhs("z1").unwrap(),
    );
    let opts = EstimatorOptions::default();

    let snap = complete_snapshot(&arm, &y, vec![Cohort::Complete; n]);
    let e = estimate_effect(&snap, &specs, &opts).unwrap();
    let n_arm = |a: u8| arm.iter().filter(|&&v| v == a).count() as f64;
    let p = |a: u8| (0..n).filter(|&i| arm[i] == a).map(|i| f64::from(y[i])).sum::<f64>() / n_arm(a);
    let pi = n_arm(1) / n as f64;
    let influence: Vec<f64> = (0..n)
        .map(|i| {
            let yi = f64::from(y[i]);
            if arm[i] == 1 {
                (yi - p(1)) / pi
            } else {
                -(yi - p(0)) / (1.0 - pi)
            }
        })
        .collect();
    check((e.diff - (p(1) - p(0))).abs() <= 1e-10, "complete-data estimate");
    check(
        (e.s2 - variance(&influence) / n as f64).abs() <= 1e-10,
        "complete-data variance",
    );

    let cohorts: Vec<Cohort> = (0..n)
        .map(|i| [Cohort::Complete, Cohort::ShortTerm, Cohort::Baseline][i % 3])
        .collect();
    let snap = complete_snapshot(&arm, &y, cohorts.clone());
    let e = estimate_effect(&snap, &WorkingSpecs::intercept_only(), &opts).unwrap();
    let cohort1_mean = |a: u8| {
        let v: Vec<f64> = (0..n)
            .filter(|&i| arm[i] == a && cohorts[i] == Cohort::Complete)
            .map(|i| f64::from(y[i]))
            .collect();
        mean(&v)
    };
    check(
        (e.mu1 - cohort1_mean(1)).abs() <= 1e-10 && (e.mu0 - cohort1_mean(0)).abs() <= 1e-10,
        "intercept-only collapse",
    );

    for (zt, zf, t) in [(0.3, 1.9, 0.5), (-1.2, 0.4, 0.27), (2.2, 2.5, 0.81)] {
        let z2 = second_stage_statistic(zf, zt, t).unwrap();
        check(
            (t.sqrt() * zt + (1.0 - t).sqrt() * z2 - zf).abs() <= 1e-10,
            "no-adaptation identity",
        );
        let plan = CombinationPlan::new(t, 0.025, 0.1).unwrap();
        check(
            (combination_test(zt, z2, &plan).0 - normal::sf(zf)).abs() <= 1e-10,
            "unadapted combination p-value",
        );
    }

    let t: f64 = 0.45;
    let z = normal::upper_quantile(0.025) / t.sqrt();
    check(
        (conditional_power(z, t, 0.0, 0.025).unwrap() - 0.5).abs() <= 1e-10,
        "conditional power fixed point",
    );

    let theta = design_drift(0.025, 0.1);
    let plan = CombinationPlan::new(0.5, 0.025, 0.1).unwrap();
    let n_planned = 1000;
    let r = reassess_sample_size(10.0, 0.5, n_planned, 700, theta, &plan, 2000, true).unwrap();
    check(
        r.n_new == 700 && r.rationale == SsrRationale::NoFurtherRecruitment,
        "zero branch",
    );
    let r = reassess_sample_size(theta * 0.5f64.sqrt(), 0.5, n_planned, 400, theta, &plan, 2000, true).unwrap();
    let ratio = r.n_second_stage / n_planned as f64;
    check(
        (ratio - 0.2952).abs() <= 5e-4 && r.rationale == SsrRationale::Interior,
        "on-track branch",
    );
    let r = reassess_sample_size(0.0, 0.5, n_planned, 400, theta, &plan, 2000, true).unwrap();
    check(r.n_new == 2000 && r.rationale == SsrRationale::AtCap, "cap branch");

    let pass = failures.is_empty();
    let detail = if pass {
        "estimator reductions, combination identity, conditional power and reassessment branches hold".into()
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(pass, detail)
}

const X1: [f64; 20] = [
    -1.2, -0.8, -0.5, -0.3, 0.0, 0.2, 0.4, 0.7, 1.1, 1.5, -1.5, -0.9, -0.1, 0.3, 0.6, 0.9, 1.3, -0.4, 0.8, 1.8,
];
const X2: [f64; 20] = [
    0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0,
];
const Y: [f64; 20] = [
    0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0,
];

fn log_lik(b: &[f64; 3]) -> f64 {
    (0..20)
        .map(|i| {
            let eta = b[0] + b[1] * X1[i] + b[2] * X2[i];
            Y[i] * eta - eta.exp().ln_1p()
        })
        .sum()
}

fn brute_force_logistic() -> [f64; 3] {
    let mut b = [0.0; 3];
    let mut step = 1.0;
    while step > 1e-10 {
        let mut improved = false;
        for j in 0..3 {
            for s in [step, -step] {
                let mut c = b;
                c[j] += s;
                if log_lik(&c) > log_lik(&b) {
                    b = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    b
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (v, p) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn glm_core() -> Outcome {
    let frame = Frame::new(20)
        .with_column("x1", X1.to_vec())
        .with_column("x2", X2.to_vec());
    let fit = fit_canonical_glm(
        &DesignSpec::parse_rhs("x1 + x2").unwrap(),
        &frame,
        &Y,
        Family::BinomialLogit,
    )
    .unwrap();
    let oracle = brute_force_logistic();
    let logit_err = (0..3)
        .map(|j| (fit.coefficients[j] - oracle[j]).abs())
        .fold(0.0, f64::max);

    let y: Vec<f64> = (0..20)
        .map(|i| 0.3 + 1.7 * X1[i] - 0.4 * X2[i] + 0.1 * (i as f64).sin())
        .collect();
    let spec = DesignSpec::parse_rhs("x1 + x2 + x1:x2").unwrap();
    let fit = fit_canonical_glm(&spec, &frame, &y, Family::GaussianIdentity).unwrap();
    let rows: Vec<[f64; 4]> = (0..20).map(|i| [1.0, X1[i], X2[i], X1[i] * X2[i]]).collect();
    let xtx: Vec<Vec<f64>> = (0..4)
        .map(|r| (0..4).map(|c| rows.iter().map(|x| x[r] * x[c]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..4)
        .map(|r| rows.iter().zip(&y).map(|(x, y)| x[r] * y).sum())
        .collect();
    let normal_eq = solve(xtx, xty);
    let gauss_err = (0..4)
        .map(|j| (fit.coefficients[j] - normal_eq[j]).abs())
        .fold(0.0, f64::max);
    outcome(
        logit_err <= 1e-6 && gauss_err <= 1e-10,
        format!("logistic max error {logit_err:.2e} (<= 1e-6), gaussian max error {gauss_err:.2e} (<= 1e-10)"),
    )
}

fn run_simulate(out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_adaptrial"))
        .arg("simulate")
        .arg("--config")
        .arg(configs_dir().join("ssr_null.toml"))
        .args(["--reps", "200", "--threads", &threads.to_string(), "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("one"), dir.path().join("four"));
    if let Err(e) = run_simulate(&a, 1).and_then(|_| run_simulate(&b, 4)) {
        return outcome(false, format!("simulate failed: {e}"));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    outcome(
        differing.is_empty() && !names.is_empty(),
        format!(
            "{} output files compared across --threads 1 and 4, differing: {:?}",
            names.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let futility = futility_runs();
    let results = [
        type_one_error_with_ssr(),
        futility_stop_probability(&futility),
        recruitment_gain(&futility),
        power_loss_bound(),
        generative_calibration(),
        r_squared_diagnostics(),
        variance_estimator_validity(),
        independent_increments(),
        robustness_under_misspecification(),
        algebraic_identities(),
        glm_core(),
        determinism(),
    ];
    for (i, r) in results.iter().enumerate() {
        println!(
            "criterion {}: {} {}",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
