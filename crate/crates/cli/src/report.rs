use std::sync::Arc;

use adaptrial::adaptive::{reassess_sample_size, CombinationPlan, SsrRationale};
use adaptrial::estimator::{InterimSnapshot, LadderFit, Method, TrialData, WorkingSpecs, X_COLUMN};
use adaptrial::glm::{DesignSpec, Formula};
use adaptrial::monitoring::{
    blinded_information_fraction, final_variance_unblinded, information_fraction, interim_z, monitor, Decision,
    FutilityBoundary, ThetaMode,
};
use adaptrial::sim::BoundaryConfig;
use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct SsrReport {
    pub theta: Option<f64>,
    pub n_new: usize,
    pub n_planned: usize,
    pub cap: usize,
    pub rationale: Option<SsrRationale>,
    pub combination_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub h1: Option<String>,
    pub h0: Option<String>,
    pub f1: String,
    pub f0: String,
    pub fallback_steps: [Option<usize>; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct InterimReport {
    pub method: Method,
    pub n_planned: usize,
    pub n_recruited: usize,
    /// Patients in cohorts 1 to 3.
    pub cohort_counts: [usize; 3],
    pub mu1: f64,
    pub mu0: f64,
    pub diff: f64,
    pub s2: f64,
    pub t_unblinded: f64,
    pub t_blinded: Option<f64>,
    #[serde(rename = "Z_t")]
    pub z_t: f64,
    #[serde(rename = "B_t")]
    pub b_t: f64,
    pub cp_design: f64,
    pub cp_observed: f64,
    pub decision: Decision,
    pub models: ModelReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssr: Option<SsrReport>,
}

/// Parses the working models and checks them against the dataset's columns.
pub fn working_specs(cfg: &AnalysisConfig, data: &TrialData) -> CliResult<WorkingSpecs> {
    let mut columns: Vec<&str> = data.covariate_names().iter().map(String::as_str).collect();
    if data.has_x() {
        columns.push(X_COLUMN);
    }
    let parse = |s: &str, which: &str| -> CliResult<DesignSpec> {
        let f = Formula::parse(s).map_err(|e| CliError::Input(format!("working_models.{which}: {e}")))?;
        if f.response != "y" {
            return Err(CliError::Input(format!(
                "working_models.{which}: response must be `y`, got `{}`",
                f.response
            )));
        }
        for t in f.design.terms() {
            for c in t.columns() {
                if !columns.contains(&c) {
                    return Err(CliError::Input(format!(
                        "working_models.{which}: the dataset has no column `{c}`"
                    )));
                }
            }
        }
        if which.starts_with('f') && f.design.references(X_COLUMN) {
            return Err(CliError::Input(format!(
                "working_models.{which}: the covariate-only model must not use `x`"
            )));
        }
        Ok(f.design)
    };
    let wm = &cfg.working_models;
    let h1 = parse(&wm.h, "h")?;
    let f1 = parse(&wm.f, "f")?;
    let h0 = wm
        .h0
        .as_deref()
        .map(|s| parse(s, "h0"))
        .transpose()?
        .unwrap_or_else(|| h1.clone());
    let f0 = wm
        .f0
        .as_deref()
        .map(|s| parse(s, "f0"))
        .transpose()?
        .unwrap_or_else(|| f1.clone());
    Ok(WorkingSpecs { h1, h0, f1, f0 })
}

fn boundary(cfg: &AnalysisConfig) -> FutilityBoundary {
    match cfg.boundary {
        BoundaryConfig::ObrienFleming => FutilityBoundary::obrien_fleming(cfg.alpha, cfg.beta),
        BoundaryConfig::FixedCp { gamma } => FutilityBoundary::FixedCpThreshold { gamma },
    }
}

/// Interim analysis of an observed dataset. With `with_ssr` the sample size
/// is reassessed even when the configuration does not enable it.
pub fn analyse(cfg: &AnalysisConfig, data: TrialData, with_ssr: bool) -> CliResult<InterimReport> {
    let specs = working_specs(cfg, &data)?;
    let snapshot = InterimSnapshot::from_observed(Arc::new(data))?;
    let n_planned = 2 * cfg.n_per_arm;
    let n_recruited = snapshot.n_recruited();
    if n_recruited > n_planned {
        return Err(CliError::Input(format!(
            "the dataset has {n_recruited} patients but only {n_planned} are planned"
        )));
    }
    let method = cfg.method;
    let view = method.view(&snapshot);
    let estimate = method.estimate(&snapshot, &specs, &cfg.estimator)?;
    let final_var = final_variance_unblinded(&view, n_planned)?;
    let t = information_fraction(estimate.s2, final_var)?;
    let t_blinded = blinded_information_fraction(
        &snapshot,
        n_planned,
        &specs.h1,
        &specs.f1,
        cfg.pi_design,
        &cfg.estimator,
    )
    .ok();
    let z_t = interim_z(&estimate)?;
    let bound = boundary(cfg);
    let design = monitor(z_t, t, cfg.alpha, cfg.beta, ThetaMode::Design, &bound)?;
    let observed = monitor(z_t, t, cfg.alpha, cfg.beta, ThetaMode::Observed, &bound)?;
    let state = match cfg.cp_theta {
        ThetaMode::Design => design,
        ThetaMode::Observed => observed,
    };

    let ssr = if with_ssr || cfg.ssr.enabled {
        let w = cfg.combination_weight.unwrap_or(state.t);
        let plan = CombinationPlan::new(w, cfg.alpha, cfg.beta)?;
        let cap = {
            let c = (cfg.ssr.cap_multiplier * n_planned as f64).floor() as usize;
            (c - c % 2).max(n_planned)
        };
        let theta = match cfg.ssr.theta_mode {
            ThetaMode::Design => Some(design.theta),
            ThetaMode::Observed => (z_t > 0.0).then_some(observed.theta),
        };
        let (n_new, rationale) = match theta {
            Some(theta) => {
                let r = reassess_sample_size(
                    z_t,
                    state.t,
                    n_planned,
                    n_recruited,
                    theta,
                    &plan,
                    cap,
                    cfg.ssr.allow_decrease,
                )?;
                (r.n_new, Some(r.rationale))
            }
            None => (n_planned, None),
        };
        Some(SsrReport {
            theta,
            n_new,
            n_planned,
            cap,
            rationale,
            combination_weight: w,
        })
    } else {
        None
    };

    let desc = |m: &Option<LadderFit>| m.as_ref().map(|f| f.model.describe());
    let models = &estimate.models;
    let steps = |m: &Option<LadderFit>| m.as_ref().map(|f| f.fallback_steps);
    let counts = view.partition().counts();
    Ok(InterimReport {
        method,
        n_planned,
        n_recruited,
        cohort_counts: [counts[0], counts[1], counts[2]],
        mu1: estimate.mu1,
        mu0: estimate.mu0,
        diff: estimate.diff,
        s2: estimate.s2,
        t_unblinded: t,
        t_blinded,
        z_t,
        b_t: state.b_t,
        cp_design: design.cp,
        cp_observed: observed.cp,
        decision: state.decision,
        models: ModelReport {
            h1: desc(&models.h1),
            h0: desc(&models.h0),
            f1: models.f1.model.describe(),
            f0: models.f0.model.describe(),
            fallback_steps: [
                steps(&models.h1),
                steps(&models.h0),
                Some(models.f1.fallback_steps),
                Some(models.f0.fallback_steps),
            ],
        },
        ssr,
    })
}
