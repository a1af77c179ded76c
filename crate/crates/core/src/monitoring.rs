//! Information fractions, interim Z and B statistics, conditional power and
//! futility stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_on, sample_variance, Cohort, EffectEstimate, EstimatorOptions, InterimSnapshot};
use crate::glm::normal;
use crate::glm::DesignSpec;

/// Information fractions above one are pulled back to this value before
/// evaluating conditional power.
pub const T_MAX_FOR_CP: f64 = 1.0 - 1e-9;

/// Z statistic of the interim estimate.
pub fn interim_z(effect: &EffectEstimate) -> Result<f64> {
    if !(effect.s2 > 0.0) {
        return Err(Error::ZeroVariance("interim variance is zero".into()));
    }
    Ok(effect.diff / effect.s2.sqrt())
}

/// Variance of the final-analysis difference in proportions with
/// `n_planned` patients, estimated from the complete cases.
pub fn final_variance_unblinded(snapshot: &InterimSnapshot, n_planned: usize) -> Result<f64> {
    let data = snapshot.data();
    let part = snapshot.partition();
    let (mut s1, mut k1, mut s0, mut k0) = (0.0, 0usize, 0.0, 0usize);
    for &i in &part.complete {
        let y = data.y(i).expect("complete case has Y");
        if data.arm(i) == 1 {
            s1 += y;
            k1 += 1;
        } else {
            s0 += y;
            k0 += 1;
        }
    }
    if k1 == 0 {
        return Err(Error::EmptyCohort1("arm 1".into()));
    }
    if k0 == 0 {
        return Err(Error::EmptyCohort1("arm 0".into()));
    }
    let (mu1, mu0) = (s1 / k1 as f64, s0 / k0 as f64);
    let pi = snapshot.pi_hat();
    let values: Vec<f64> = part
        .complete
        .iter()
        .map(|&i| {
            let y = data.y(i).expect("complete case has Y");
            if data.arm(i) == 1 {
                (y - mu1) / pi
            } else {
                -(y - mu0) / (1.0 - pi)
            }
        })
        .collect();
    Ok(sample_variance(&values) / n_planned as f64)
}

/// `final_var / interim_s2`, clamped to (0, 1].
pub fn information_fraction(interim_s2: f64, final_var: f64) -> Result<f64> {
    if !(interim_s2 > 0.0) {
        return Err(Error::NonPositiveVariance(interim_s2));
    }
    if !(final_var > 0.0) {
        return Err(Error::NonPositiveVariance(final_var));
    }
    Ok((final_var / interim_s2).min(1.0))
}

/// Information fraction computed without the treatment labels, using the
/// randomization ratio `pi_design` and one pooled pair of working models.
pub fn blinded_information_fraction(
    snapshot: &InterimSnapshot,
    n_planned: usize,
    h_spec: &DesignSpec,
    f_spec: &DesignSpec,
    pi_design: f64,
    opts: &EstimatorOptions,
) -> Result<f64> {
    let data = snapshot.data();
    let part = snapshot.partition();
    if part.complete.is_empty() {
        return Err(Error::EmptyCohort1("pooled data".into()));
    }
    let ys: Vec<f64> = part
        .complete
        .iter()
        .map(|&i| data.y(i).expect("complete case has Y"))
        .collect();
    let mu_c1 = ys.iter().sum::<f64>() / ys.len() as f64;
    let msq_c1 = ys.iter().map(|y| (y - mu_c1) * (y - mu_c1)).sum::<f64>() / ys.len() as f64;
    if !(msq_c1 > 0.0) {
        return Err(Error::ZeroVariance("all complete-case outcomes are equal".into()));
    }
    let scale = pi_design * (1.0 - pi_design);
    let final_var = msq_c1 / (n_planned as f64 * scale);

    let recruited = snapshot.recruited();
    let pooled = estimate_on(snapshot, &recruited, 2, h_spec, f_spec, opts)?;
    let pi_x = snapshot.pi_x_hat();
    let pi_y = snapshot.pi_y_hat();
    let mut sum_sq = 0.0;
    for (k, &i) in pooled.patients.iter().enumerate() {
        let c: Cohort = snapshot.cohort(i);
        let mut v = pooled.y_hat_prime[k] - pooled.mu;
        if c.c_x() {
            v += (pooled.y_hat[k] - pooled.y_hat_prime[k]) / pi_x;
        }
        if c.c_y() {
            v += (data.y(i).expect("complete case has Y") - pooled.y_hat[k]) / (pi_x * pi_y);
        }
        sum_sq += v * v;
    }
    let n_prime = pooled.patients.len() as f64;
    let interim_var = sum_sq / n_prime / (n_prime * scale);
    if !(interim_var > 0.0) {
        return Err(Error::ZeroVariance("blinded interim variance is zero".into()));
    }
    Ok(final_var / interim_var)
}

/// Drift of the final Z statistic under the effect the trial is powered for.
pub fn design_drift(alpha: f64, beta: f64) -> f64 {
    normal::upper_quantile(alpha) + normal::upper_quantile(beta)
}

/// Probability of rejecting at the final analysis given the interim
/// statistic, assuming drift `theta` for the remaining data.
pub fn conditional_power(z_t: f64, t: f64, theta: f64, alpha: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidFraction(t));
    }
    let z_alpha = normal::upper_quantile(alpha);
    let arg = (z_alpha - z_t * t.sqrt() - theta * (1.0 - t)) / (1.0 - t).sqrt();
    Ok(normal::sf(arg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FutilityBoundary {
    /// O'Brien–Fleming type β-spending on the B-value scale, expressed as a
    /// conditional power cutoff under the design drift.
    ObrienFlemingBeta { alpha: f64, beta: f64 },
    /// The same conditional power cutoff at every information fraction.
    FixedCpThreshold { gamma: f64 },
}

impl FutilityBoundary {
    pub fn obrien_fleming(alpha: f64, beta: f64) -> Self {
        FutilityBoundary::ObrienFlemingBeta { alpha, beta }
    }

    /// β spent by information fraction `t`.
    pub fn beta_spent(beta: f64, t: f64) -> f64 {
        2.0 * normal::sf(normal::upper_quantile(beta / 2.0) / t.sqrt())
    }

    /// Conditional power cutoff γ(t).
    ///
    /// For the β-spending rule, stopping when `B_t < θt − z_{1−β(t)}√t`
    /// is the same as stopping when the design-drift conditional power falls
    /// below `1 − Φ((z_{1−β(t)}√t − z_{1−β}) / √(1−t))`.
    pub fn threshold_at(&self, t: f64) -> f64 {
        match *self {
            FutilityBoundary::FixedCpThreshold { gamma } => gamma,
            FutilityBoundary::ObrienFlemingBeta { beta, .. } => {
                let t = t.clamp(1e-12, T_MAX_FOR_CP);
                let z_spent = normal::upper_quantile(Self::beta_spent(beta, t));
                let arg = (z_spent * t.sqrt() - normal::upper_quantile(beta)) / (1.0 - t).sqrt();
                normal::sf(arg).clamp(0.0, 1.0)
            }
        }
    }

    /// Interim Z below which the design-drift rule stops at fraction `t`.
    pub fn z_boundary(&self, t: f64, alpha: f64, beta: f64) -> f64 {
        let t = t.clamp(1e-12, T_MAX_FOR_CP);
        let gamma = self.threshold_at(t);
        let theta = design_drift(alpha, beta);
        let z_alpha = normal::upper_quantile(alpha);
        // Solve conditional_power(z, t, θ, α) = γ for z.
        (z_alpha - theta * (1.0 - t) - normal::upper_quantile(gamma) * (1.0 - t).sqrt()) / t.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    StopFutility,
}

/// Stops iff `cp < γ(t)`; ties continue.
pub fn futility_decision(cp: f64, boundary: &FutilityBoundary, t: f64) -> Decision {
    if cp < boundary.threshold_at(t) {
        Decision::StopFutility
    } else {
        Decision::Continue
    }
}

/// Which drift the conditional power assumes for the remaining data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// `z_{1−α} + z_{1−β}`.
    #[default]
    Design,
    /// `Z_t / √t`.
    Observed,
}

impl ThetaMode {
    pub fn theta(self, z_t: f64, t: f64, alpha: f64, beta: f64) -> f64 {
        match self {
            ThetaMode::Design => design_drift(alpha, beta),
            ThetaMode::Observed => z_t / t.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitoringState {
    pub t: f64,
    pub z_t: f64,
    pub b_t: f64,
    pub cp: f64,
    pub theta: f64,
    pub decision: Decision,
}

/// Conditional power and futility decision at fraction `t` (clamped below 1).
pub fn monitor(
    z_t: f64,
    t: f64,
    alpha: f64,
    beta: f64,
    theta_mode: ThetaMode,
    boundary: &FutilityBoundary,
) -> Result<MonitoringState> {
    if !(t > 0.0) {
        return Err(Error::InvalidFraction(t));
    }
    let t = t.min(T_MAX_FOR_CP);
    let theta = theta_mode.theta(z_t, t, alpha, beta);
    let cp = conditional_power(z_t, t, theta, alpha)?;
    Ok(MonitoringState {
        t,
        z_t,
        b_t: z_t * t.sqrt(),
        cp,
        theta,
        decision: futility_decision(cp, boundary, t),
    })
}
