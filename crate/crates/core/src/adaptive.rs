//! Inverse-normal combination test and conditional-power based sample size
//! reassessment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinationPlan {
    /// Weight of the first-stage statistic.
    pub w: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CombinationPlan {
    pub fn new(w: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::BadConfig(format!(
                "combination weight must lie in (0, 1), got {w}"
            )));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::BadConfig(format!("alpha must lie in (0, 0.5), got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::BadConfig(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self { w, alpha, beta })
    }
}

/// Part of the final statistic contributed by data gathered after the interim.
pub fn second_stage_statistic(z_final_naive: f64, z_t: f64, t_tilde: f64) -> Result<f64> {
    if !(t_tilde > 0.0 && t_tilde < 1.0) {
        return Err(Error::InvalidFraction(t_tilde));
    }
    Ok((z_final_naive - t_tilde.sqrt() * z_t) / (1.0 - t_tilde).sqrt())
}

/// Combined one-sided p-value and rejection flag.
pub fn combination_test(z1: f64, z2: f64, plan: &CombinationPlan) -> (f64, bool) {
    let p = normal::sf(plan.w.sqrt() * z1 + (1.0 - plan.w).sqrt() * z2);
    (p, p < plan.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsrRationale {
    /// The computed size fell below the planned size, which is kept.
    BelowFloor,
    Interior,
    AtCap,
    /// Everyone needed is already recruited.
    NoFurtherRecruitment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrResult {
    /// New total sample size.
    pub n_new: usize,
    /// Unrounded number of patients needed after the interim information.
    pub n_second_stage: f64,
    pub capped: bool,
    pub rationale: SsrRationale,
}

/// Total sample size giving conditional power `1 − β` under drift `theta`
/// (expressed for the planned total `n`), bounded below by the patients
/// already recruited and above by `cap`.
#[allow(clippy::too_many_arguments)]
pub fn reassess_sample_size(
    z_t: f64,
    t: f64,
    n: usize,
    n_prime: usize,
    theta: f64,
    plan: &CombinationPlan,
    cap: usize,
    allow_decrease: bool,
) -> Result<SsrResult> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidFraction(t));
    }
    if !(theta > 0.0) {
        return Err(Error::NonPositiveTheta(theta));
    }
    if n == 0 || cap == 0 {
        return Err(Error::InvalidInput("sample sizes must be positive".into()));
    }
    let z_alpha = normal::upper_quantile(plan.alpha);
    let z_beta = normal::quantile(plan.beta);
    let root = ((z_alpha - z_t * t.sqrt()) / (1.0 - t).sqrt() - z_beta).max(0.0);
    let per_patient_drift_sq = theta * theta / n as f64;
    let second = root * root / per_patient_drift_sq;
    let target = second + t * n as f64;

    let floor = if allow_decrease { n_prime } else { n_prime.max(n) };
    let (n_new, capped, rationale) = if target > cap as f64 {
        (cap.max(n_prime), true, SsrRationale::AtCap)
    } else if target <= floor as f64 {
        let why = if floor == n_prime {
            SsrRationale::NoFurtherRecruitment
        } else {
            SsrRationale::BelowFloor
        };
        (floor, false, why)
    } else {
        let mut m = target.ceil() as usize;
        m += m % 2;
        if m >= cap {
            (cap, true, SsrRationale::AtCap)
        } else {
            (m, false, SsrRationale::Interior)
        }
    };
    Ok(SsrResult {
        n_new,
        n_second_stage: second,
        capped,
        rationale,
    })
}
