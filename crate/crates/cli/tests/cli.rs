use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn adaptrial(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptrial"))
        .args(args)
        .env_remove("ADAPTRIAL_THREADS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn compare(got: &Value, want: &Value, at: &str) {
    match (got, want) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{at}: {a} vs {b}");
        }
        (Value::Object(a), Value::Object(b)) => {
            assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "{at}");
            for (k, v) in b {
                compare(&a[k], v, &format!("{at}.{k}"));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            assert_eq!(a.len(), b.len(), "{at}");
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                compare(x, y, &format!("{at}[{i}]"));
            }
        }
        _ => assert_eq!(got, want, "{at}"),
    }
}

const ANALYSIS: &str = "name = \"t\"\nn_per_arm = 10\n\n[working_models]\nh = \"y ~ x + z1\"\nf = \"y ~ z1\"\n\n[estimator]\nmin_extra_rows = 0\n";

fn run_interim(dataset: &Path, config: &Path, out: &Path) -> Output {
    adaptrial(&[
        "interim",
        "--dataset",
        path(dataset),
        "--config",
        path(config),
        "--out",
        path(out),
    ])
}

#[test]
fn example_dataset_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = repo().join("data");
    let o = run_interim(
        &data.join("example_interim.csv"),
        &data.join("example_analysis.toml"),
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let got: Value = serde_json::from_slice(&fs::read(dir.path().join("interim_report.json")).unwrap()).unwrap();
    let want: Value = serde_json::from_slice(&fs::read(data.join("example_report.json")).unwrap()).unwrap();
    compare(&got, &want, "report");
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, got);
}

#[test]
fn complete_data_reports_difference_in_proportions() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("id,arm,x,y,z1\n");
    let ys = [1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1];
    for (i, y) in ys.iter().enumerate() {
        csv += &format!("p{i},{},{},{y},{}\n", i % 2, (i / 2) % 2, i as f64 / 7.0 - 1.0);
    }
    let data = write(dir.path(), "d.csv", &csv);
    let cfg = write(dir.path(), "a.toml", ANALYSIS);
    let o = run_interim(&data, &cfg, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = |arm: usize| {
        let v: Vec<f64> = ys
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == arm)
            .map(|(_, &y)| f64::from(y))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((r["diff"].as_f64().unwrap() - (mean(1) - mean(0))).abs() < 1e-12);
    assert_eq!(r["cohort_counts"], serde_json::json!([20, 0, 0]));
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = repo().join("data/example_interim.csv");

    let cfg = write(dir.path(), "unknown.toml", &format!("{ANALYSIS}\nbogus = 1\n"));
    let o = run_interim(&data, &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("bogus"));

    let cfg = write(
        dir.path(),
        "cap.toml",
        &format!("{ANALYSIS}\n[ssr]\ncap_multiplier = 0.5\n"),
    );
    let o = run_interim(&data, &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cfg = write(dir.path(), "ok.toml", ANALYSIS);
    let bad = write(
        dir.path(),
        "ynox.csv",
        "id,arm,x,y,z1\na,1,1,1,0.1\nb,0,NA,1,0.2\nc,1,0,0,0.3\n",
    );
    let o = run_interim(&bad, &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains('b'), "{}", stderr(&o));

    let bad = write(dir.path(), "value.csv", "id,arm,x,y,z1\na,1,1,1,0.1\nb,2,0,1,0.2\n");
    let o = run_interim(&bad, &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run_interim(&dir.path().join("missing.csv"), &cfg, dir.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn estimation_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", ANALYSIS);
    let data = write(
        dir.path(),
        "d.csv",
        "id,arm,x,y,z1\na,1,1,1,0.1\nb,1,0,0,0.4\nc,0,1,NA,0.2\nd,0,NA,NA,0.3\n",
    );
    let o = run_interim(&data, &cfg, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const SCENARIO: &str = "name = \"small\"\nn_per_arm = 60\nrecruitment_rate = 12\nseed = 3\n\n[x_model]\nintercept = -0.3\ncoefficients = { z1 = 0.6 }\n\n[y_model]\nintercept = -1.0\ncoefficients = { x = 2.0, z1 = 0.35, a = 0.3 }\n\n[working_models]\nh = \"y ~ x + z1\"\nf = \"y ~ z1\"\n\n[ssr]\nenabled = true\n";

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--config", path(config), "--out", path(out)];
    args.extend_from_slice(extra);
    adaptrial(&args)
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulation_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, threads) in [(&a, "1"), (&b, "4")] {
        let o = simulate(&cfg, out, &["--reps", "30", "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = read_all(&a);
    assert_eq!(first.len(), 4);
    assert_eq!(first, read_all(&b));

    let o = simulate(&a.join("resolved_config.toml"), &c, &["--reps", "30", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, read_all(&c));
}

#[test]
fn single_replication_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("o");
    let o = simulate(&cfg, &out, &["--reps", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("replications.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# seed=3 reps=1"));
    assert_eq!(lines.len(), 3);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("characteristics.json")).unwrap()).unwrap();
    let q = summary["characteristics"]["sample_size_quantiles"].as_array().unwrap();
    assert!(q.iter().all(|v| v == &q[0]));
}

#[test]
fn minimal_scenario_gets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.toml",
        "n_per_arm = 40\nseed = 1\n\n[y_model]\nintercept = -0.2\ncoefficients = { z1 = 0.5 }\n\n[working_models]\nh = \"y ~ z1\"\nf = \"y ~ z1\"\n",
    );
    let out = dir.path().join("o");
    let o = simulate(&cfg, &out, &["--reps", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    for key in [
        "alpha = 0.025",
        "beta = 0.1",
        "target_information = 0.5",
        "obrien_fleming",
    ] {
        assert!(resolved.contains(key), "missing {key} in\n{resolved}");
    }
}

#[test]
fn failure_budget_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        "n_per_arm = 40\nseed = 1\n\n[y_model]\nintercept = -30\n\n[working_models]\nh = \"y ~ z1\"\nf = \"y ~ z1\"\n",
    );
    let o = simulate(&cfg, &dir.path().join("o"), &["--reps", "10"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn power_tables_cover_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("o");
    let o = adaptrial(&[
        "power-tables",
        "--config",
        path(&cfg),
        "--out",
        path(&out),
        "--reps",
        "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("power_tables.csv")).unwrap();
    for m in ["proposal", "standard", "x-only"] {
        assert!(csv.contains(m), "{csv}");
    }
}
