//! `adaptrial`: interim analyses of observed datasets and Monte Carlo
//! operating characteristics of adaptive designs.

mod config;
mod dataset;
mod error;
mod output;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptrial::estimator::Method;
use adaptrial::sim::{rate_se, recruitment_curve, run_monte_carlo, Parallelism, ScenarioConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "adaptrial",
    version,
    about = "Interim monitoring and sample size reassessment for two-arm trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo operating characteristics of a scenario.
    Simulate(SimArgs),
    /// Interim analysis of an observed dataset.
    Interim(DataArgs),
    /// Interim analysis of an observed dataset with sample size reassessment.
    Ssr(DataArgs),
    /// Operating characteristics of a scenario under every analysis method.
    PowerTables(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Scenario file (TOML, or JSON with a `.json` extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ADAPTRIAL_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the scenario's analysis method.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct DataArgs {
    /// Patient CSV with columns id, arm, y and optionally arrival_day, x and covariates.
    #[arg(long)]
    dataset: PathBuf,
    /// Analysis settings (TOML, or JSON with a `.json` extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured analysis method.
    #[arg(long)]
    method: Option<Method>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Interim(a) => interim(&a, false),
        Command::Ssr(a) => interim(&a, true),
        Command::PowerTables(a) => power_tables(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn scenario_config(args: &SimArgs) -> CliResult<ScenarioConfig> {
    let mut cfg = config::load_scenario(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.method {
        cfg.method = m;
    }
    Ok(cfg)
}

fn provenance(cfg: &ScenarioConfig, reps: u64) -> CliResult<String> {
    let json = serde_json::to_string(cfg).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(format!("seed={} reps={reps} config={json}", cfg.seed))
}

#[derive(Serialize)]
struct Failure {
    rep: usize,
    error: String,
}

#[derive(Serialize)]
struct Characteristics<'a> {
    seed: u64,
    reps: u64,
    config: &'a ScenarioConfig,
    characteristics: &'a adaptrial::sim::OperatingCharacteristics,
    failures: Vec<Failure>,
}

fn resolved_toml(cfg: &ScenarioConfig) -> CliResult<Vec<u8>> {
    toml::to_string(cfg)
        .map(String::into_bytes)
        .map_err(|e| CliError::Io(e.to_string()))
}

fn simulate(args: &SimArgs) -> CliResult<()> {
    let cfg = scenario_config(args)?;
    let scenario = cfg.compile()?;
    let resolved = &scenario.config;
    let reps = args.reps as usize;
    let par = Parallelism::Threads(args.threads);
    let run = run_monte_carlo(&scenario, reps, par)?;
    let curve = recruitment_curve(&scenario, &resolved.plot_grid, reps, par)?;

    let prov = provenance(resolved, args.reps)?;
    let summary = Characteristics {
        seed: resolved.seed,
        reps: args.reps,
        config: resolved,
        characteristics: &run.characteristics,
        failures: run
            .failures
            .iter()
            .map(|(rep, e)| Failure {
                rep: *rep,
                error: e.to_string(),
            })
            .collect(),
    };
    let out = &args.out;
    output::write_atomic(&out.join("characteristics.json"), &output::json_bytes(&summary)?)?;
    output::write_atomic(
        &out.join("replications.csv"),
        &output::replications_csv(&prov, &run.records)?,
    )?;
    output::write_atomic(&out.join("plot_data.csv"), &output::plot_csv(&prov, &curve)?)?;
    output::write_atomic(&out.join("resolved_config.toml"), &resolved_toml(resolved)?)?;

    let title = format!(
        "{} ({}, seed {})",
        resolved.name.as_deref().unwrap_or("scenario"),
        resolved.method.name(),
        resolved.seed
    );
    print!("{}", output::summary_table(&title, &run.characteristics));
    Ok(())
}

#[derive(Serialize)]
struct PowerRow {
    method: &'static str,
    reps: usize,
    stop_rate: f64,
    stop_rate_se: f64,
    reject_rate_fixed: f64,
    reject_rate_fixed_se: f64,
    reject_rate_no_ssr: f64,
    reject_rate_no_ssr_se: f64,
    reject_rate_ssr: f64,
    reject_rate_ssr_se: f64,
    power_loss: f64,
    power_loss_se: f64,
    mean_t: f64,
    mean_fraction_recruited: f64,
    mean_ss: f64,
    sd_ss: f64,
}

#[derive(Serialize)]
struct PowerTables<'a> {
    seed: u64,
    reps: u64,
    config: &'a ScenarioConfig,
    rows: &'a [PowerRow],
}

fn power_tables(args: &SimArgs) -> CliResult<()> {
    let cfg = scenario_config(args)?;
    let scenario = cfg.compile()?;
    let resolved = &scenario.config;
    let reps = args.reps as usize;
    let par = Parallelism::Threads(args.threads);
    let mut methods = vec![Method::Proposal, Method::Standard];
    if scenario.has_x() {
        methods.push(Method::XOnly);
    }
    let mut rows = Vec::new();
    for m in methods {
        let run = run_monte_carlo(&scenario.with_method(m), reps, par)?;
        let oc = &run.characteristics;
        let se = |r: f64| rate_se(r, oc.reps);
        rows.push(PowerRow {
            method: m.name(),
            reps: oc.reps,
            stop_rate: oc.stop_futility_rate,
            stop_rate_se: se(oc.stop_futility_rate),
            reject_rate_fixed: oc.reject_rate_fixed,
            reject_rate_fixed_se: se(oc.reject_rate_fixed),
            reject_rate_no_ssr: oc.reject_rate_no_ssr,
            reject_rate_no_ssr_se: se(oc.reject_rate_no_ssr),
            reject_rate_ssr: oc.reject_rate_ssr,
            reject_rate_ssr_se: se(oc.reject_rate_ssr),
            power_loss: oc.power_loss,
            power_loss_se: se(oc.power_loss),
            mean_t: oc.mean_t,
            mean_fraction_recruited: oc.mean_fraction_recruited,
            mean_ss: oc.mean_ss,
            sd_ss: oc.sd_ss,
        });
    }
    let prov = provenance(resolved, args.reps)?;
    let doc = PowerTables {
        seed: resolved.seed,
        reps: args.reps,
        config: resolved,
        rows: &rows,
    };
    let out = &args.out;
    output::write_atomic(&out.join("power_tables.json"), &output::json_bytes(&doc)?)?;
    output::write_atomic(&out.join("power_tables.csv"), &output::csv_bytes(&prov, &rows)?)?;
    output::write_atomic(&out.join("resolved_config.toml"), &resolved_toml(resolved)?)?;

    println!(
        "{:<10}{:>7}{:>18}{:>18}{:>18}{:>18}{:>9}{:>8}",
        "method", "reps", "stop (SE)", "reject (SE)", "reject SSR (SE)", "power loss (SE)", "mean t", "% rec"
    );
    let pair = |r: f64, s: f64| format!("{r:.4} ({s:.4})");
    for r in &rows {
        println!(
            "{:<10}{:>7}{:>18}{:>18}{:>18}{:>18}{:>9.3}{:>8.1}",
            r.method,
            r.reps,
            pair(r.stop_rate, r.stop_rate_se),
            pair(r.reject_rate_no_ssr, r.reject_rate_no_ssr_se),
            pair(r.reject_rate_ssr, r.reject_rate_ssr_se),
            pair(r.power_loss, r.power_loss_se),
            r.mean_t,
            100.0 * r.mean_fraction_recruited
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct InterimDocument<'a> {
    dataset: String,
    config: &'a config::AnalysisConfig,
    #[serde(flatten)]
    report: report::InterimReport,
}

fn interim(args: &DataArgs, with_ssr: bool) -> CliResult<()> {
    let mut cfg = config::load_analysis(&args.config)?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    let data = dataset::read_dataset(&args.dataset)?;
    let report = report::analyse(&cfg, data, with_ssr)?;
    if let Some(ssr) = &report.ssr {
        cfg.combination_weight = Some(ssr.combination_weight);
    }
    let name = if with_ssr {
        "ssr_report.json"
    } else {
        "interim_report.json"
    };
    let doc = InterimDocument {
        dataset: file_name(&args.dataset),
        config: &cfg,
        report,
    };
    let bytes = output::json_bytes(&doc)?;
    output::write_atomic(&args.out.join(name), &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
