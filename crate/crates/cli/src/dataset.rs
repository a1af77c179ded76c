use std::path::Path;

use adaptrial::estimator::{TrialData, X_COLUMN};
use adaptrial::glm::Frame;

use crate::error::{CliError, CliResult};

const MISSING: &str = "NA";

/// Reads a patient table with columns `id`, `arm`, `y`, optionally
/// `arrival_day` and `x`, and numeric covariates in every other column.
pub fn read_dataset(path: &Path) -> CliResult<TrialData> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open dataset {}: {e}", path.display())))?;
    parse_dataset(file, &path.display().to_string())
}

pub fn parse_dataset<R: std::io::Read>(reader: R, source: &str) -> CliResult<TrialData> {
    let bad = |m: String| CliError::Input(format!("{source}: {m}"));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(format!("header: {e}")))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col = find("id").ok_or_else(|| bad("missing column `id`".into()))?;
    let arm_col = find("arm").ok_or_else(|| bad("missing column `arm`".into()))?;
    let y_col = find("y").ok_or_else(|| bad("missing column `y`".into()))?;
    let day_col = find("arrival_day");
    let x_col = find(X_COLUMN);
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| ![Some(id_col), Some(arm_col), Some(y_col), day_col, x_col].contains(&Some(*j)))
        .map(|(j, h)| (j, h.to_string()))
        .collect();
    for (_, name) in &cov_cols {
        if name.is_empty() || headers.iter().filter(|h| h == name).count() > 1 {
            return Err(bad(format!("covariate column name `{name}` is empty or repeated")));
        }
    }

    let mut ids = Vec::new();
    let mut arms = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut days = Vec::new();
    let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(bad(format!("line {line}: empty id")));
        }
        let at = |what: &str, v: &str| bad(format!("line {line} (id `{id}`): {what} `{v}`"));
        let arm = match &rec[arm_col] {
            "0" => 0,
            "1" => 1,
            v => return Err(at("arm must be 0 or 1, got", v)),
        };
        let binary = |v: &str, name: &str| -> CliResult<Option<u8>> {
            match v {
                MISSING => Ok(None),
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                v => Err(at(&format!("{name} must be 0, 1 or {MISSING}, got"), v)),
            }
        };
        ys.push(binary(&rec[y_col], "y")?);
        if let Some(j) = x_col {
            xs.push(binary(&rec[j], "x")?);
        }
        let day = match day_col {
            Some(j) => rec[j]
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .ok_or_else(|| at("arrival_day must be a non-negative number, got", &rec[j]))?,
            None => 0.0,
        };
        days.push(day);
        for ((j, name), col) in cov_cols.iter().zip(covs.iter_mut()) {
            let v = rec[*j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| at(&format!("covariate `{name}` must be numeric, got"), &rec[*j]))?;
            col.push(v);
        }
        if ids.contains(&id) {
            return Err(bad(format!("line {line}: duplicate id `{id}`")));
        }
        ids.push(id);
        arms.push(arm);
    }
    if ids.is_empty() {
        return Err(bad("no patients".into()));
    }
    let mut frame = Frame::new(ids.len());
    for ((_, name), col) in cov_cols.into_iter().zip(covs) {
        frame.push_column(name, col);
    }
    TrialData::new(ids, arms, frame, x_col.map(|_| xs), ys, days).map_err(|e| bad(e.to_string()))
}
