use std::path::Path;

use adaptrial::estimator::{EstimatorOptions, Method};
use adaptrial::monitoring::ThetaMode;
use adaptrial::sim::{BoundaryConfig, CovariateSource, ScenarioConfig, SsrConfig, WorkingModelsConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Settings for analysing an observed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Planned patients per arm.
    pub n_per_arm: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub working_models: WorkingModelsConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub cp_theta: ThetaMode,
    #[serde(default)]
    pub ssr: SsrConfig,
    /// First-stage weight of the combination test; the interim information
    /// fraction when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination_weight: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    /// Randomization probability assumed by the blinded information fraction.
    #[serde(default = "default_pi_design")]
    pub pi_design: f64,
}

fn default_alpha() -> f64 {
    0.025
}
fn default_beta() -> f64 {
    0.10
}
fn default_method() -> Method {
    Method::Proposal
}
fn default_pi_design() -> f64 {
    0.5
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Parses TOML, or JSON when the file ends in `.json`.
pub fn parse_file<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read(path)?;
    parse_str(&text, path)
}

pub fn parse_str<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<T> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Reads a scenario, resolving relative covariate table paths against the
/// directory of the configuration file.
pub fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig = parse_file(path)?;
    if let CovariateSource::Table { path: table } = &mut cfg.covariates {
        if table.is_relative() {
            if let Some(dir) = path.parent() {
                *table = dir.join(&*table);
            }
        }
    }
    Ok(cfg)
}

pub fn load_analysis(path: &Path) -> CliResult<AnalysisConfig> {
    let cfg: AnalysisConfig = parse_file(path)?;
    if cfg.n_per_arm == 0 {
        return Err(CliError::Input("n_per_arm must be positive".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 0.5) {
        return Err(CliError::Input(format!(
            "alpha must lie in (0, 0.5), got {}",
            cfg.alpha
        )));
    }
    if !(cfg.beta > 0.0 && cfg.beta < 0.5) {
        return Err(CliError::Input(format!("beta must lie in (0, 0.5), got {}", cfg.beta)));
    }
    if !(cfg.pi_design > 0.0 && cfg.pi_design < 1.0) {
        return Err(CliError::Input(format!(
            "pi_design must lie in (0, 1), got {}",
            cfg.pi_design
        )));
    }
    if !(cfg.ssr.cap_multiplier >= 1.0 && cfg.ssr.cap_multiplier.is_finite()) {
        return Err(CliError::Input(format!(
            "ssr.cap_multiplier must be at least 1, got {}",
            cfg.ssr.cap_multiplier
        )));
    }
    if let Some(w) = cfg.combination_weight {
        if !(w > 0.0 && w < 1.0) {
            return Err(CliError::Input(format!(
                "combination_weight must lie in (0, 1), got {w}"
            )));
        }
    }
    if let BoundaryConfig::FixedCp { gamma } = cfg.boundary {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(CliError::Input(format!(
                "boundary.gamma must lie in [0, 1], got {gamma}"
            )));
        }
    }
    Ok(cfg)
}
