//! Covariate- and short-term-endpoint-adjusted estimation of arm means at an
//! interim look, with the influence-function variance of their difference.
//!
//! Per arm: a model `h` for Y given X and Z is fit on the complete cases and
//! imputes Y for patients with X only; a model `f` for the (partly imputed)
//! outcome given Z is fit on everyone with X and imputes patients with Z only.

mod snapshot;

use serde::{Deserialize, Serialize};

pub use snapshot::{
    partition_cohorts, Cohort, CohortPartition, InterimSnapshot, Lags, PatientRecord, TrialData, X_COLUMN,
};

use crate::error::{Error, Result};
use crate::glm::{fit_glm_with, DesignSpec, Family, FitOptions, FittedGlm, Frame, Term};

/// Tuning of the imputation model fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// A model is only attempted with at least `terms + min_extra_rows` rows.
    pub min_extra_rows: usize,
    pub family: Family,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            min_extra_rows: 5,
            family: Family::BinomialLogit,
        }
    }
}

/// Model used to impute outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationModel {
    Fitted(FittedGlm),
    /// Every response was identical; the model predicts that value.
    Constant(f64),
}

impl ImputationModel {
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        match self {
            ImputationModel::Fitted(m) => m.predict_mean(frame),
            ImputationModel::Constant(c) => Ok(vec![*c; frame.n_rows()]),
        }
    }

    /// Human-readable formula of the model actually used.
    pub fn describe(&self) -> String {
        match self {
            ImputationModel::Fitted(m) => m.design.to_string(),
            ImputationModel::Constant(c) => format!("constant {c}"),
        }
    }
}

/// An imputation model together with how far down the fallback ladder it sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderFit {
    pub model: ImputationModel,
    /// Number of reductions applied to the requested model.
    pub fallback_steps: usize,
}

/// Successively smaller designs: interactions are dropped last-first, then
/// main effects in reverse declaration order, ending at intercept-only.
pub fn fallback_ladder(spec: &DesignSpec) -> Vec<DesignSpec> {
    let mut ladder = vec![spec.clone()];
    let mut current = spec.clone();
    loop {
        let terms = current.terms();
        let drop = terms
            .iter()
            .rposition(Term::is_interaction)
            .or_else(|| terms.iter().rposition(|t| *t != Term::Intercept));
        match drop {
            Some(j) => {
                current = current.without(j);
                if current.is_empty() {
                    break;
                }
                ladder.push(current.clone());
            }
            None => break,
        }
    }
    if !ladder.last().is_some_and(DesignSpec::is_intercept_only) {
        ladder.push(DesignSpec::intercept_only());
    }
    ladder
}

/// Fits `spec`, stepping down the fallback ladder on failure or when the
/// data are too few for the number of terms.
pub fn fit_with_fallback(
    spec: &DesignSpec,
    frame: &Frame,
    response: &[f64],
    opts: &EstimatorOptions,
) -> Result<LadderFit> {
    let n = frame.n_rows();
    if n == 0 {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    let first = response[0];
    if response.iter().all(|&y| y == first) {
        return Ok(LadderFit {
            model: ImputationModel::Constant(first),
            fallback_steps: fallback_ladder(spec).len(),
        });
    }
    let fit_opts = FitOptions::default();
    let mut last_err = None;
    for (step, candidate) in fallback_ladder(spec).iter().enumerate() {
        if !candidate.is_intercept_only() && n < candidate.len() + opts.min_extra_rows {
            continue;
        }
        match fit_glm_with(candidate, frame, response, opts.family, &fit_opts) {
            Ok(m) => {
                return Ok(LadderFit {
                    model: ImputationModel::Fitted(m),
                    fallback_steps: step,
                })
            }
            Err(e @ Error::MissingColumn(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Imputation {
        model: spec.to_string(),
        source: Box::new(last_err.unwrap_or(Error::InvalidInput("no usable model".into()))),
    })
}

/// Result of the imputation steps for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmEstimate {
    pub arm: u8,
    pub mu: f64,
    /// Recruited patients of this arm, in table order.
    pub patients: Vec<usize>,
    /// Prediction of `h` for patients with X observed (NaN otherwise).
    pub y_hat: Vec<f64>,
    /// Prediction of `f` for every recruited patient of the arm.
    pub y_hat_prime: Vec<f64>,
    /// `None` when no patient needed the `h` imputation.
    pub h: Option<LadderFit>,
    pub f: LadderFit,
}

/// Estimates the mean primary outcome in `arm`.
pub fn estimate_arm_mean(
    snapshot: &InterimSnapshot,
    arm: u8,
    h_spec: &DesignSpec,
    f_spec: &DesignSpec,
    opts: &EstimatorOptions,
) -> Result<ArmEstimate> {
    let data = snapshot.data();
    let in_arm = |i: &usize| data.arm(*i) == arm;
    let patients: Vec<usize> = snapshot.recruited().into_iter().filter(in_arm).collect();
    estimate_on(snapshot, &patients, arm, h_spec, f_spec, opts)
}

/// The imputation steps on an explicit set of recruited patients (one arm, or
/// both arms pooled).
pub(crate) fn estimate_on(
    snapshot: &InterimSnapshot,
    patients: &[usize],
    arm: u8,
    h_spec: &DesignSpec,
    f_spec: &DesignSpec,
    opts: &EstimatorOptions,
) -> Result<ArmEstimate> {
    let data = snapshot.data();
    let frame = data.frame();
    let label = || {
        if arm > 1 {
            "pooled data".to_string()
        } else {
            format!("arm {arm}")
        }
    };

    let mut with_x = Vec::new();
    let mut complete_pos = Vec::new();
    let mut short_pos = Vec::new();
    for (k, &i) in patients.iter().enumerate() {
        match snapshot.cohort(i) {
            Cohort::Complete => {
                complete_pos.push(with_x.len());
                with_x.push(k);
            }
            Cohort::ShortTerm => {
                short_pos.push(with_x.len());
                with_x.push(k);
            }
            _ => {}
        }
    }
    if complete_pos.is_empty() {
        return Err(Error::EmptyCohort1(label()));
    }

    let with_x_rows: Vec<usize> = with_x.iter().map(|&k| patients[k]).collect();
    let with_x_frame = frame.select_rows(&with_x_rows);
    let y_of = |i: usize| data.y(i).expect("complete case has Y");

    // Y* among patients with X: observed Y, or the h imputation.
    let mut y_star: Vec<f64> = vec![f64::NAN; with_x.len()];
    let mut y_hat_x: Vec<f64> = vec![f64::NAN; with_x.len()];
    let h = if short_pos.is_empty() {
        for &p in &complete_pos {
            let y = y_of(with_x_rows[p]);
            y_star[p] = y;
            y_hat_x[p] = y;
        }
        None
    } else {
        let c1_rows: Vec<usize> = complete_pos.iter().map(|&p| with_x_rows[p]).collect();
        let c1_frame = frame.select_rows(&c1_rows);
        let c1_y: Vec<f64> = c1_rows.iter().map(|&i| y_of(i)).collect();
        let h = fit_with_fallback(h_spec, &c1_frame, &c1_y, opts).map_err(|e| imputation(&label, "h", e))?;
        let pred = h.model.predict(&with_x_frame)?;
        for &p in &complete_pos {
            y_star[p] = y_of(with_x_rows[p]);
        }
        for &p in &short_pos {
            y_star[p] = pred[p];
        }
        y_hat_x = pred;
        Some(h)
    };

    let f = fit_with_fallback(f_spec, &with_x_frame, &y_star, opts).map_err(|e| imputation(&label, "f", e))?;
    let all_frame = frame.select_rows(patients);
    let y_hat_prime = f.model.predict(&all_frame)?;

    let mut y_hat = vec![f64::NAN; patients.len()];
    let mut total = 0.0;
    let mut x_pos = 0;
    for k in 0..patients.len() {
        if with_x.get(x_pos) == Some(&k) {
            y_hat[k] = y_hat_x[x_pos];
            total += y_star[x_pos];
            x_pos += 1;
        } else {
            total += y_hat_prime[k];
        }
    }
    let mu = (total / patients.len() as f64).clamp(0.0, 1.0);
    Ok(ArmEstimate {
        arm,
        mu,
        patients: patients.to_vec(),
        y_hat,
        y_hat_prime,
        h,
        f,
    })
}

fn imputation(label: &impl Fn() -> String, which: &str, e: Error) -> Error {
    match e {
        Error::MissingColumn(_) => e,
        Error::Imputation { model, source } => Error::Imputation {
            model: format!("{which} ({}) : {model}", label()),
            source,
        },
        other => Error::Imputation {
            model: format!("{which} ({})", label()),
            source: Box::new(other),
        },
    }
}

/// Working-model designs for both arms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkingSpecs {
    pub h1: DesignSpec,
    pub h0: DesignSpec,
    pub f1: DesignSpec,
    pub f0: DesignSpec,
}

impl WorkingSpecs {
    /// Same `h` and `f` in both arms.
    pub fn shared(h: DesignSpec, f: DesignSpec) -> Self {
        Self {
            h1: h.clone(),
            h0: h,
            f1: f.clone(),
            f0: f,
        }
    }

    pub fn intercept_only() -> Self {
        Self::shared(DesignSpec::intercept_only(), DesignSpec::intercept_only())
    }
}

/// Fitted imputation models actually used in each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingModels {
    pub h1: Option<LadderFit>,
    pub h0: Option<LadderFit>,
    pub f1: LadderFit,
    pub f0: LadderFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub mu1: f64,
    pub mu0: f64,
    pub diff: f64,
    /// Estimated variance of `diff`.
    pub s2: f64,
    /// Influence value per recruited patient, aligned with `patients`.
    pub influence: Vec<f64>,
    pub patients: Vec<usize>,
    pub n_prime: usize,
    pub pi_hat: f64,
    pub pi_x_hat: f64,
    pub pi_y_hat: f64,
    pub models: WorkingModels,
}

/// Estimates the treatment effect and its variance.
pub fn estimate_effect(
    snapshot: &InterimSnapshot,
    specs: &WorkingSpecs,
    opts: &EstimatorOptions,
) -> Result<EffectEstimate> {
    let a1 = estimate_arm_mean(snapshot, 1, &specs.h1, &specs.f1, opts)?;
    let a0 = estimate_arm_mean(snapshot, 0, &specs.h0, &specs.f0, opts)?;
    let pi = snapshot.pi_hat();
    let pi_x = snapshot.pi_x_hat();
    let pi_y = snapshot.pi_y_hat();
    let data = snapshot.data();

    let mut patients = Vec::with_capacity(a1.patients.len() + a0.patients.len());
    let mut influence = Vec::with_capacity(patients.capacity());
    for (est, weight, sign) in [(&a1, pi, 1.0), (&a0, 1.0 - pi, -1.0)] {
        for (k, &i) in est.patients.iter().enumerate() {
            let c = snapshot.cohort(i);
            let mut v = est.y_hat_prime[k] - est.mu;
            if c.c_x() {
                v += (est.y_hat[k] - est.y_hat_prime[k]) / pi_x;
            }
            if c.c_y() {
                v += (data.y(i).expect("complete case has Y") - est.y_hat[k]) / (pi_x * pi_y);
            }
            patients.push(i);
            influence.push(sign * v / weight);
        }
    }
    // Table order keeps results independent of how arms are interleaved.
    let mut order: Vec<usize> = (0..patients.len()).collect();
    order.sort_unstable_by_key(|&k| patients[k]);
    let patients: Vec<usize> = order.iter().map(|&k| patients[k]).collect();
    let influence: Vec<f64> = order.iter().map(|&k| influence[k]).collect();

    let n_prime = patients.len();
    let s2 = sample_variance(&influence) / n_prime as f64;
    if !(s2 > 0.0) {
        return Err(Error::ZeroVariance("influence values are constant".into()));
    }
    Ok(EffectEstimate {
        mu1: a1.mu,
        mu0: a0.mu,
        diff: a1.mu - a0.mu,
        s2,
        influence,
        patients,
        n_prime,
        pi_hat: pi,
        pi_x_hat: pi_x,
        pi_y_hat: pi_y,
        models: WorkingModels {
            h1: a1.h,
            h0: a0.h,
            f1: a1.f,
            f0: a0.f,
        },
    })
}

/// Sample variance with the `n − 1` denominator (0 for fewer than two values).
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Interim analysis strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Uses covariates, the short-term endpoint and the primary endpoint.
    Proposal,
    /// Complete cases only (unadjusted difference in proportions).
    Standard,
    /// Imputes from the short-term endpoint alone; patients without X are ignored.
    XOnly,
}

impl Method {
    /// The snapshot the method analyses.
    pub fn view(self, snapshot: &InterimSnapshot) -> InterimSnapshot {
        match self {
            Method::Proposal => snapshot.clone(),
            Method::Standard => snapshot.complete_cases(),
            Method::XOnly => snapshot.without_baseline_only(),
        }
    }

    /// Working models the method uses, given the configured ones.
    pub fn specs(self, configured: &WorkingSpecs, has_x: bool) -> WorkingSpecs {
        match self {
            Method::Proposal => configured.clone(),
            Method::Standard => WorkingSpecs::intercept_only(),
            Method::XOnly => {
                let h = if has_x {
                    DesignSpec::new(vec![Term::Intercept, Term::Main(X_COLUMN.into())]).expect("valid design")
                } else {
                    DesignSpec::intercept_only()
                };
                WorkingSpecs::shared(h, DesignSpec::intercept_only())
            }
        }
    }

    /// Effect estimate of this method at `snapshot`.
    pub fn estimate(
        self,
        snapshot: &InterimSnapshot,
        configured: &WorkingSpecs,
        opts: &EstimatorOptions,
    ) -> Result<EffectEstimate> {
        let view = self.view(snapshot);
        estimate_effect(&view, &self.specs(configured, snapshot.data().has_x()), opts)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposal => "proposal",
            Method::Standard => "standard",
            Method::XOnly => "x-only",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposal" => Ok(Method::Proposal),
            "standard" => Ok(Method::Standard),
            "x-only" => Ok(Method::XOnly),
            other => Err(Error::BadConfig(format!(
                "unknown method `{other}` (expected proposal, standard or x-only)"
            ))),
        }
    }
}
