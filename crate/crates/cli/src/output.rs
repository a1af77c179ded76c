use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adaptrial::sim::{rate_se, CurvePoint, OperatingCharacteristics, ReplicationRecord};
use serde::Serialize;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().ok_or_else(|| io_err(path, "not a file path"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// CSV whose first line is a `#` comment carrying `provenance`.
pub fn csv_bytes<T: Serialize>(provenance: &str, rows: &[T]) -> CliResult<Vec<u8>> {
    let mut out = format!("# {provenance}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(out)
}

pub fn replications_csv(provenance: &str, records: &[ReplicationRecord]) -> CliResult<Vec<u8>> {
    csv_bytes(provenance, records)
}

#[derive(Serialize)]
struct PlotRow {
    target_t: f64,
    method: &'static str,
    reps: usize,
    stop_rate: f64,
    stop_rate_se: f64,
    mean_fraction_recruited: f64,
    mean_fraction_recruited_se: f64,
    mean_days_to_interim: f64,
}

pub fn plot_csv(provenance: &str, points: &[CurvePoint]) -> CliResult<Vec<u8>> {
    let rows: Vec<PlotRow> = points
        .iter()
        .map(|p| PlotRow {
            target_t: p.target_t,
            method: p.method.name(),
            reps: p.reps,
            stop_rate: p.stop_rate,
            stop_rate_se: p.stop_rate_se,
            mean_fraction_recruited: p.mean_fraction_recruited,
            mean_fraction_recruited_se: p.mean_fraction_recruited_se,
            mean_days_to_interim: p.mean_days_to_interim,
        })
        .collect();
    if rows.is_empty() {
        let header = "target_t,method,reps,stop_rate,stop_rate_se,mean_fraction_recruited,mean_fraction_recruited_se,mean_days_to_interim\n";
        return Ok(format!("# {provenance}\n{header}").into_bytes());
    }
    csv_bytes(provenance, &rows)
}

fn rate_line(out: &mut String, label: &str, rate: f64, reps: usize) {
    let _ = writeln!(out, "{label:<34}{rate:>10.4}   (MC SE {:.4})", rate_se(rate, reps));
}

fn value_line(out: &mut String, label: &str, value: f64) {
    let _ = writeln!(out, "{label:<34}{value:>10.4}");
}

/// Fixed-width summary of a Monte Carlo run.
pub fn summary_table(title: &str, oc: &OperatingCharacteristics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "{}", "-".repeat(62));
    let _ = writeln!(s, "{:<34}{:>10}", "replications", oc.reps);
    let _ = writeln!(s, "{:<34}{:>10}", "failed replications", oc.failures);
    rate_line(&mut s, "futility stop probability", oc.stop_futility_rate, oc.reps);
    rate_line(&mut s, "rejection rate, no interim", oc.reject_rate_fixed, oc.reps);
    rate_line(&mut s, "rejection rate, futility only", oc.reject_rate_no_ssr, oc.reps);
    rate_line(&mut s, "rejection rate, with SSR", oc.reject_rate_ssr, oc.reps);
    rate_line(&mut s, "power loss", oc.power_loss, oc.reps);
    value_line(&mut s, "mean information fraction", oc.mean_t);
    if let Some(b) = oc.mean_t_blinded {
        value_line(&mut s, "mean blinded information fraction", b);
    }
    value_line(
        &mut s,
        "mean % recruited at interim",
        100.0 * oc.mean_fraction_recruited,
    );
    value_line(&mut s, "mean days to interim", oc.mean_days_to_interim);
    value_line(&mut s, "mean sample size, with SSR", oc.mean_ss);
    value_line(&mut s, "sd sample size, with SSR", oc.sd_ss);
    let q = oc.sample_size_quantiles;
    let _ = writeln!(
        s,
        "{:<34}{:>10.1}{:>8.1}{:>8.1}{:>8.1}{:>8.1}",
        "sample size min/q1/med/q3/max", q[0], q[1], q[2], q[3], q[4]
    );
    s
}
