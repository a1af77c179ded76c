//! One simulated trial from generation to final decision.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{InterimTrigger, Scenario};
use super::generate::{generate_trial, replication_rng};
use crate::adaptive::{combination_test, reassess_sample_size, second_stage_statistic, SsrRationale};
use crate::error::{Error, Result};
use crate::estimator::{estimate_effect, EffectEstimate, InterimSnapshot, Method, TrialData};
use crate::glm::normal;
use crate::monitoring::{
    blinded_information_fraction, design_drift, final_variance_unblinded, information_fraction, interim_z, monitor,
    Decision, ThetaMode,
};

/// Largest second-stage information fraction used in the combination test.
pub const T_TILDE_MAX: f64 = 1.0 - 1e-6;

/// An interim analysis performed at a given calendar day.
#[derive(Debug, Clone)]
pub struct InterimLook {
    pub day: f64,
    /// Everything observed at `day`.
    pub snapshot: InterimSnapshot,
    /// The estimate of the analysing method.
    pub estimate: EffectEstimate,
    pub t: f64,
}

/// Runs `method`'s interim analysis on the planned trial at `day`.
pub fn interim_look(scenario: &Scenario, data: Arc<TrialData>, method: Method, day: f64) -> Result<InterimLook> {
    let snapshot = InterimSnapshot::at_calendar_time(data, scenario.n_total, day, scenario.lags);
    let view = method.view(&snapshot);
    let specs = method.specs(&scenario.specs, snapshot.data().has_x());
    let estimate = estimate_effect(&view, &specs, &scenario.config.estimator)?;
    let final_var = final_variance_unblinded(&view, scenario.n_total)?;
    let t = information_fraction(estimate.s2, final_var)?;
    Ok(InterimLook {
        day,
        snapshot,
        estimate,
        t,
    })
}

/// Interim look at the scenario's trigger.
///
/// For an information target the earliest whole day reaching the target is
/// found by bisection between day 0 and the day the last planned patient
/// completes follow-up. Days at which the estimate cannot be formed count as
/// not having reached the target.
pub fn snapshot_at(scenario: &Scenario, data: Arc<TrialData>, method: Method) -> Result<InterimLook> {
    if let Some(day) = scenario.fixed_trigger_day() {
        return interim_look(scenario, data, method, day).map_err(|e| match e {
            Error::EmptyCohort1(what) => {
                Error::TriggerUnreachable(format!("no complete cases in {what} at day {day:.1}"))
            }
            other => other,
        });
    }
    let InterimTrigger::TargetInformation(target) = scenario.config.interim else {
        unreachable!("calendar triggers handled above");
    };
    let planned = scenario.n_total.min(data.len());
    let last = data.arrival_days()[..planned].iter().copied().fold(0.0, f64::max);
    let mut hi = (last + scenario.lags.y).ceil();
    let mut best = match interim_look(scenario, Arc::clone(&data), method, hi) {
        Ok(look) if look.t >= target => look,
        Ok(look) => {
            return Err(Error::TriggerUnreachable(format!(
                "information fraction only reaches {:.3} at full follow-up",
                look.t
            )))
        }
        Err(e) => return Err(Error::TriggerUnreachable(format!("at full follow-up: {e}"))),
    };
    let mut lo = 0.0;
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        match interim_look(scenario, Arc::clone(&data), method, mid) {
            Ok(look) if look.t >= target => {
                hi = mid;
                best = look;
            }
            _ => lo = mid,
        }
    }
    Ok(best)
}

/// Unadjusted difference-in-proportions test on the first `k` patients.
/// Returns the Z statistic and its variance estimate.
pub fn naive_final_test(data: &TrialData, k: usize) -> Result<(f64, f64)> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..k.min(data.len()) {
        let y = data
            .y(i)
            .ok_or_else(|| Error::InvalidInput(format!("patient `{}` has no outcome", data.id(i))))?;
        if data.arm(i) == 1 {
            s1 += y;
            n1 += 1;
        } else {
            s0 += y;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidInput("final analysis needs patients in both arms".into()));
    }
    let (p1, p0) = (s1 / n1 as f64, s0 / n0 as f64);
    let var = p1 * (1.0 - p1) / n1 as f64 + p0 * (1.0 - p0) / n0 as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("final outcomes are constant in both arms".into()));
    }
    Ok(((p1 - p0) / var.sqrt(), var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub day: f64,
    pub n_recruited: usize,
    pub fraction_recruited: f64,
    pub t: f64,
    pub t_blinded: Option<f64>,
    pub mu1: f64,
    pub mu0: f64,
    pub diff: f64,
    pub s2: f64,
    pub z_t: f64,
    pub b_t: f64,
    pub cp: f64,
    pub stopped: bool,
    /// Naive final Z on the planned sample size.
    pub z_final: f64,
    /// Second-stage statistic of the planned (unadapted) trial.
    pub z2_planned: f64,
    /// Decision of the design without an interim look.
    pub reject_fixed: bool,
    pub reject_no_ssr: bool,
    pub n_ssr: usize,
    pub ssr_rationale: Option<SsrRationale>,
    pub t_tilde: Option<f64>,
    pub z2: Option<f64>,
    pub p_combined: Option<f64>,
    pub reject_ssr: bool,
    pub ss_no_ssr: usize,
    pub ss_ssr: usize,
}

/// Simulates replication `rep` of the scenario.
pub fn run_replication(scenario: &Scenario, rep: usize) -> Result<ReplicationRecord> {
    let cfg = &scenario.config;
    let mut rng = replication_rng(cfg.seed, rep as u64);
    let data = Arc::new(generate_trial(scenario, &mut rng, scenario.cap_total));
    let look = snapshot_at(scenario, Arc::clone(&data), cfg.method)?;
    let n_total = scenario.n_total;
    let n_recruited = look.snapshot.n_recruited();
    let s2 = look.estimate.s2;
    let z_t = interim_z(&look.estimate)?;
    let state = monitor(z_t, look.t, cfg.alpha, cfg.beta, cfg.cp_theta, &scenario.boundary)?;
    let stopped = state.decision == Decision::StopFutility;

    let t_blinded = if cfg.blinded {
        blinded_information_fraction(
            &look.snapshot,
            n_total,
            &scenario.specs.h1,
            &scenario.specs.f1,
            0.5,
            &cfg.estimator,
        )
        .ok()
    } else {
        None
    };

    let (z_final, v_final) = naive_final_test(&data, n_total)?;
    let reject_fixed = z_final > normal::upper_quantile(cfg.alpha);
    let t_planned = (v_final / s2).min(T_TILDE_MAX);
    let z2_planned = second_stage_statistic(z_final, z_t, t_planned)?;
    let reject_no_ssr = !stopped && reject_fixed;

    let mut record = ReplicationRecord {
        rep,
        day: look.day,
        n_recruited,
        fraction_recruited: n_recruited as f64 / n_total as f64,
        t: look.t,
        t_blinded,
        mu1: look.estimate.mu1,
        mu0: look.estimate.mu0,
        diff: look.estimate.diff,
        s2,
        z_t,
        b_t: state.b_t,
        cp: state.cp,
        stopped,
        z_final,
        z2_planned,
        reject_fixed,
        reject_no_ssr,
        n_ssr: n_total,
        ssr_rationale: None,
        t_tilde: None,
        z2: None,
        p_combined: None,
        reject_ssr: reject_no_ssr,
        ss_no_ssr: if stopped { n_recruited } else { n_total },
        ss_ssr: if stopped { n_recruited } else { n_total },
    };
    if stopped || !cfg.ssr.enabled {
        return Ok(record);
    }

    let theta = match cfg.ssr.theta_mode {
        ThetaMode::Design => Some(design_drift(cfg.alpha, cfg.beta)),
        ThetaMode::Observed => (z_t > 0.0).then(|| z_t / state.t.sqrt()),
    };
    let n_new = match theta {
        Some(theta) => {
            let ssr = reassess_sample_size(
                z_t,
                state.t,
                n_total,
                n_recruited,
                theta,
                &scenario.plan,
                scenario.cap_total,
                cfg.ssr.allow_decrease,
            )?;
            record.ssr_rationale = Some(ssr.rationale);
            ssr.n_new
        }
        None => n_total,
    };
    let (z1, v1) = naive_final_test(&data, n_new)?;
    let t_tilde = (v1 / s2).min(T_TILDE_MAX);
    let z2 = second_stage_statistic(z1, z_t, t_tilde)?;
    let (p, reject) = combination_test(z_t, z2, &scenario.plan);
    record.n_ssr = n_new;
    record.t_tilde = Some(t_tilde);
    record.z2 = Some(z2);
    record.p_combined = Some(p);
    record.reject_ssr = reject;
    record.ss_ssr = n_new;
    Ok(record)
}
