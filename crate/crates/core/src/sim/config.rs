//! Scenario configuration and its validated, compiled form.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptive::CombinationPlan;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorOptions, Lags, Method, WorkingSpecs, X_COLUMN};
use crate::glm::{DesignSpec, Formula, Term};
use crate::monitoring::{FutilityBoundary, ThetaMode};

/// Days per month used to convert monthly rates.
pub const DAYS_PER_MONTH: f64 = 30.4375;

/// Column holding the treatment indicator in generative models.
pub const ARM_COLUMN: &str = "a";

const BUILTIN_COVARIATES: &str = include_str!("../../data/covariates_standin.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_per_arm: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    /// Patients per month.
    #[serde(default = "defaults::rate")]
    pub recruitment_rate: f64,
    #[serde(default = "defaults::lags")]
    pub lags: Lags,
    #[serde(default)]
    pub covariates: CovariateSource,
    /// P(X = 1 | Z, A) on the logit scale; absent for designs without a
    /// short-term endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_model: Option<LinearPredictor>,
    /// P(Y = 1 | X, Z, A) on the logit scale.
    pub y_model: LinearPredictor,
    /// Multiplier applied to the coefficients listed in `scaled`.
    #[serde(default = "defaults::one")]
    pub c: f64,
    pub working_models: WorkingModelsConfig,
    #[serde(default = "defaults::interim")]
    pub interim: InterimTrigger,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    /// Drift assumed by the conditional power used for futility.
    #[serde(default)]
    pub cp_theta: ThetaMode,
    #[serde(default)]
    pub ssr: SsrConfig,
    /// First-stage weight of the combination test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination_weight: Option<f64>,
    #[serde(default = "defaults::method")]
    pub method: Method,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    /// Also compute the blinded information fraction at each interim.
    #[serde(default)]
    pub blinded: bool,
    /// Target information fractions for the stop-probability and
    /// recruitment curves in the plot data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plot_grid: Vec<f64>,
    pub seed: u64,
}

mod defaults {
    use super::*;

    pub fn alpha() -> f64 {
        0.025
    }
    pub fn beta() -> f64 {
        0.10
    }
    pub fn rate() -> f64 {
        8.0
    }
    pub fn lags() -> Lags {
        Lags { x: 112.0, y: 420.0 }
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn interim() -> InterimTrigger {
        InterimTrigger::TargetInformation(0.5)
    }
    pub fn method() -> Method {
        Method::Proposal
    }
    pub fn cap() -> f64 {
        2.0
    }
    pub fn yes() -> bool {
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateSource {
    /// The bundled 132-row table with columns `z1`, `z2`, `z3`.
    #[default]
    Builtin,
    /// CSV with a header row `id,<covariate>,...`; rows are resampled.
    Table { path: PathBuf },
    /// Independent standard normal covariates.
    Normal { columns: Vec<String> },
}

/// `intercept + Σ coefficient·term`, with `c` applied to the `scaled` terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPredictor {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scaled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkingModelsConfig {
    /// Model for Y given X and Z, e.g. `y ~ x + z1`.
    pub h: String,
    /// Model for Y given Z, e.g. `y ~ z1`.
    pub f: String,
    /// Control-arm overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterimTrigger {
    /// Earliest day at which the method's information fraction reaches the target.
    TargetInformation(f64),
    /// A fixed calendar day.
    FixedDay(f64),
    /// The day at which this fraction of the planned patients is expected
    /// to be recruited.
    RecruitedFraction(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    #[default]
    ObrienFleming,
    FixedCp {
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsrConfig {
    pub enabled: bool,
    pub cap_multiplier: f64,
    pub allow_decrease: bool,
    pub theta_mode: ThetaMode,
}

impl Default for SsrConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            cap_multiplier: defaults::cap(),
            allow_decrease: defaults::yes(),
            theta_mode: ThetaMode::Design,
        }
    }
}

/// Covariate rows to resample from.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CovariateTable {
    /// Reads a CSV whose first column is an identifier and the remaining
    /// columns are numeric covariates.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::BadConfig(format!("covariate table header: {e}")))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::BadConfig(
                "covariate table needs an id column and at least one covariate".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        for n in &names {
            if n == X_COLUMN || n == ARM_COLUMN {
                return Err(Error::BadConfig(format!("covariate name `{n}` is reserved")));
            }
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::BadConfig(format!("covariate table: {e}")))?;
            let row = rec
                .iter()
                .skip(1)
                .zip(&names)
                .map(|(v, name)| {
                    v.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::BadConfig(format!(
                            "covariate table line {}: `{name}` = `{v}` is not a number",
                            line + 2
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != names.len() {
                return Err(Error::BadConfig(format!(
                    "covariate table line {} has {} values, expected {}",
                    line + 2,
                    row.len(),
                    names.len()
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::BadConfig("covariate table is empty".into()));
        }
        Ok(Self { names, rows })
    }

    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN_COVARIATES.as_bytes()).expect("bundled covariate table is valid")
    }
}

/// Linear predictor with terms resolved against named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledPredictor {
    pub intercept: f64,
    pub terms: Vec<(Term, f64)>,
}

impl CompiledPredictor {
    fn compile(lp: &LinearPredictor, c: f64, available: &[&str], what: &str) -> Result<Self> {
        for s in &lp.scaled {
            if !lp.coefficients.contains_key(s) {
                return Err(Error::BadConfig(format!(
                    "{what}: scaled term `{s}` has no coefficient"
                )));
            }
        }
        let mut terms = Vec::with_capacity(lp.coefficients.len());
        for (name, &coef) in &lp.coefficients {
            let term = Term::parse(name).map_err(|e| Error::BadConfig(format!("{what}: {e}")))?;
            if term == Term::Intercept {
                return Err(Error::BadConfig(format!(
                    "{what}: use `intercept` instead of a `1` term"
                )));
            }
            for col in term.columns() {
                if !available.contains(&col) {
                    return Err(Error::BadConfig(format!(
                        "{what}: term `{name}` uses unknown column `{col}`"
                    )));
                }
            }
            if !coef.is_finite() {
                return Err(Error::BadConfig(format!(
                    "{what}: coefficient of `{name}` is not finite"
                )));
            }
            let scale = if lp.scaled.contains(name) { c } else { 1.0 };
            terms.push((term, coef * scale));
        }
        if !lp.intercept.is_finite() {
            return Err(Error::BadConfig(format!("{what}: intercept is not finite")));
        }
        Ok(Self {
            intercept: lp.intercept,
            terms,
        })
    }

    pub fn eval(&self, lookup: &impl Fn(&str) -> Option<f64>) -> f64 {
        let mut eta = self.intercept;
        for (t, b) in &self.terms {
            eta += b * t.value(lookup).expect("columns validated at compile time");
        }
        eta
    }
}

/// A validated scenario ready for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// The configuration with every default made explicit.
    pub config: ScenarioConfig,
    pub covariates: Option<CovariateTable>,
    pub covariate_names: Vec<String>,
    pub x_model: Option<CompiledPredictor>,
    pub y_model: CompiledPredictor,
    pub specs: WorkingSpecs,
    pub boundary: FutilityBoundary,
    pub plan: CombinationPlan,
    pub lags: Lags,
    /// Planned total sample size.
    pub n_total: usize,
    /// Largest total sample size after reassessment.
    pub cap_total: usize,
}

impl ScenarioConfig {
    /// Validates the configuration and compiles its models.
    pub fn compile(&self) -> Result<Scenario> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.n_per_arm == 0 {
            return bad("n_per_arm must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return bad(format!("beta must lie in (0, 0.5), got {}", self.beta));
        }
        if !(self.recruitment_rate > 0.0 && self.recruitment_rate.is_finite()) {
            return bad(format!(
                "recruitment_rate must be positive, got {}",
                self.recruitment_rate
            ));
        }
        let lags = Lags::new(self.lags.x, self.lags.y)?;
        if !self.c.is_finite() {
            return bad("c must be finite".into());
        }
        if !(self.ssr.cap_multiplier >= 1.0 && self.ssr.cap_multiplier.is_finite()) {
            return bad(format!(
                "ssr.cap_multiplier must be at least 1, got {}",
                self.ssr.cap_multiplier
            ));
        }
        match self.interim {
            InterimTrigger::TargetInformation(t) if !(t > 0.0 && t < 1.0) => {
                return bad(format!("interim.target_information must lie in (0, 1), got {t}"));
            }
            InterimTrigger::FixedDay(d) if !(d >= 0.0 && d.is_finite()) => {
                return bad(format!("interim.fixed_day must be a non-negative day, got {d}"));
            }
            InterimTrigger::RecruitedFraction(f) if !(f > 0.0 && f <= 1.0) => {
                return bad(format!("interim.recruited_fraction must lie in (0, 1], got {f}"));
            }
            _ => {}
        }
        if let BoundaryConfig::FixedCp { gamma } = self.boundary {
            if !(0.0..=1.0).contains(&gamma) {
                return bad(format!("boundary.gamma must lie in [0, 1], got {gamma}"));
            }
        }
        for &t in &self.plot_grid {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("plot_grid values must lie in (0, 1), got {t}"));
            }
        }

        let covariates = match &self.covariates {
            CovariateSource::Builtin => Some(CovariateTable::builtin()),
            CovariateSource::Table { path } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::BadConfig(format!("cannot open covariate table {}: {e}", path.display())))?;
                Some(CovariateTable::from_csv(file)?)
            }
            CovariateSource::Normal { columns } => {
                if columns.is_empty() {
                    return bad("covariates.columns must not be empty".into());
                }
                for c in columns {
                    if c == X_COLUMN || c == ARM_COLUMN {
                        return bad(format!("covariate name `{c}` is reserved"));
                    }
                    Term::parse(c).map_err(|e| Error::BadConfig(e.to_string()))?;
                }
                None
            }
        };
        let covariate_names: Vec<String> = match (&covariates, &self.covariates) {
            (Some(t), _) => t.names.clone(),
            (None, CovariateSource::Normal { columns }) => columns.clone(),
            _ => unreachable!(),
        };

        let has_x = self.x_model.is_some();
        let mut cols: Vec<&str> = covariate_names.iter().map(String::as_str).collect();
        cols.push(ARM_COLUMN);
        let x_model = self
            .x_model
            .as_ref()
            .map(|m| CompiledPredictor::compile(m, self.c, &cols, "x_model"))
            .transpose()?;
        if has_x {
            cols.push(X_COLUMN);
        }
        let y_model = CompiledPredictor::compile(&self.y_model, self.c, &cols, "y_model")?;

        let working_cols: Vec<&str> = cols.iter().copied().filter(|c| *c != ARM_COLUMN).collect();
        let parse = |s: &str, which: &str| -> Result<DesignSpec> {
            let f = Formula::parse(s).map_err(|e| Error::BadConfig(format!("working_models.{which}: {e}")))?;
            if f.response != "y" {
                return Err(Error::BadConfig(format!(
                    "working_models.{which}: response must be `y`, got `{}`",
                    f.response
                )));
            }
            for t in f.design.terms() {
                for c in t.columns() {
                    if !working_cols.contains(&c) {
                        return Err(Error::BadConfig(format!(
                            "working_models.{which}: unknown column `{c}`"
                        )));
                    }
                }
            }
            if which.starts_with('f') && f.design.references(X_COLUMN) {
                return Err(Error::BadConfig(format!(
                    "working_models.{which}: the covariate-only model must not use `x`"
                )));
            }
            Ok(f.design)
        };
        let h1 = parse(&self.working_models.h, "h")?;
        let f1 = parse(&self.working_models.f, "f")?;
        let h0 = match &self.working_models.h0 {
            Some(s) => parse(s, "h0")?,
            None => h1.clone(),
        };
        let f0 = match &self.working_models.f0 {
            Some(s) => parse(s, "f0")?,
            None => f1.clone(),
        };

        let n_total = 2 * self.n_per_arm;
        let cap_total = if self.ssr.enabled {
            let c = (self.ssr.cap_multiplier * n_total as f64).floor() as usize;
            (c - c % 2).max(n_total)
        } else {
            n_total
        };
        let w = match self.combination_weight {
            Some(w) => w,
            None => default_weight(self.interim, lags, self.recruitment_rate, n_total),
        };
        let plan = CombinationPlan::new(w, self.alpha, self.beta)?;
        let boundary = match self.boundary {
            BoundaryConfig::ObrienFleming => FutilityBoundary::obrien_fleming(self.alpha, self.beta),
            BoundaryConfig::FixedCp { gamma } => FutilityBoundary::FixedCpThreshold { gamma },
        };

        let mut resolved = self.clone();
        resolved.combination_weight = Some(w);
        resolved.working_models.h0 = Some(
            self.working_models
                .h0
                .clone()
                .unwrap_or_else(|| self.working_models.h.clone()),
        );
        resolved.working_models.f0 = Some(
            self.working_models
                .f0
                .clone()
                .unwrap_or_else(|| self.working_models.f.clone()),
        );

        Ok(Scenario {
            config: resolved,
            covariates,
            covariate_names,
            x_model,
            y_model,
            specs: WorkingSpecs { h1, h0, f1, f0 },
            boundary,
            plan,
            lags,
            n_total,
            cap_total,
        })
    }
}

/// Calendar day at which `fraction` of `n_total` patients are expected.
pub fn expected_recruitment_day(fraction: f64, n_total: usize, rate_per_month: f64) -> f64 {
    fraction * n_total as f64 / rate_per_month * DAYS_PER_MONTH
}

/// Pre-specified first-stage weight: the targeted information fraction, or
/// for calendar triggers the expected share of complete cases at that day.
pub fn default_weight(trigger: InterimTrigger, lags: Lags, rate: f64, n_total: usize) -> f64 {
    let day = match trigger {
        InterimTrigger::TargetInformation(t) => return t,
        InterimTrigger::FixedDay(d) => d,
        InterimTrigger::RecruitedFraction(f) => expected_recruitment_day(f, n_total, rate),
    };
    let complete = (day - lags.y).max(0.0) * rate / DAYS_PER_MONTH;
    (complete / n_total as f64).clamp(0.01, 0.99)
}

impl Scenario {
    pub fn has_x(&self) -> bool {
        self.x_model.is_some()
    }

    /// Calendar day of a fixed trigger, `None` for information-based triggers.
    pub fn fixed_trigger_day(&self) -> Option<f64> {
        match self.config.interim {
            InterimTrigger::TargetInformation(_) => None,
            InterimTrigger::FixedDay(d) => Some(d),
            InterimTrigger::RecruitedFraction(f) => {
                Some(expected_recruitment_day(f, self.n_total, self.config.recruitment_rate))
            }
        }
    }

    /// Same scenario with another analysis method.
    pub fn with_method(&self, method: Method) -> Scenario {
        let mut s = self.clone();
        s.config.method = method;
        s
    }
}
