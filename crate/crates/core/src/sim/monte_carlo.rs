//! Monte Carlo replications and their summary.

use serde::{Deserialize, Serialize};

use super::config::{InterimTrigger, Scenario};
use super::replicate::{run_replication, ReplicationRecord};
use crate::error::{Error, Result};
use crate::estimator::Method;

/// How replications are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Worker threads; `0` lets the pool pick one per core. Without the
    /// `parallel` feature this runs sequentially.
    Threads(usize),
}

/// Fraction of replications allowed to fail before a run is rejected.
pub const FAILURE_BUDGET: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRates {
    /// Among continued trials the fixed test does not reject: share rejected with reassessment.
    pub rejected_with_ssr_not_without: f64,
    /// Among continued trials the fixed test rejects: share not rejected with reassessment.
    pub not_rejected_with_ssr_rejected_without: f64,
    pub gained: usize,
    pub continued_not_rejected: usize,
    pub lost: usize,
    pub continued_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub stop_futility_rate: f64,
    /// Rejection rate of the design without an interim analysis.
    pub reject_rate_fixed: f64,
    pub reject_rate_no_ssr: f64,
    pub reject_rate_ssr: f64,
    /// Probability of stopping a trial the fixed design would have rejected.
    pub power_loss: f64,
    pub mean_t: f64,
    pub mean_t_blinded: Option<f64>,
    pub mean_days_to_interim: f64,
    pub mean_fraction_recruited: f64,
    /// Minimum, quartiles and maximum of the total sample size with reassessment.
    pub sample_size_quantiles: [f64; 5],
    pub sample_size_quantiles_no_ssr: [f64; 5],
    pub mean_ss: f64,
    pub sd_ss: f64,
    pub mean_ss_no_ssr: f64,
    pub sd_ss_no_ssr: f64,
    pub switch_rates: SwitchRates,
}

/// Binomial Monte Carlo standard error of a rate.
pub fn rate_se(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

/// Standard error of a mean of `values`.
pub fn mean_se(values: &[f64]) -> f64 {
    (crate::estimator::sample_variance(values) / values.len() as f64).sqrt()
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_numbers(values: impl Iterator<Item = f64>) -> [f64; 5] {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&v, p))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

impl OperatingCharacteristics {
    pub fn from_records(records: &[ReplicationRecord], failures: usize) -> Result<Self> {
        let reps = records.len();
        if reps == 0 {
            return Err(Error::InvalidInput("no successful replications".into()));
        }
        let rate =
            |f: &dyn Fn(&ReplicationRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / reps as f64;
        let ss: Vec<f64> = records.iter().map(|r| r.ss_ssr as f64).collect();
        let ss0: Vec<f64> = records.iter().map(|r| r.ss_no_ssr as f64).collect();
        let blinded: Vec<f64> = records.iter().filter_map(|r| r.t_blinded).collect();

        let count = |f: &dyn Fn(&ReplicationRecord) -> bool| records.iter().filter(|r| f(r)).count();
        let continued_not_rejected = count(&|r| !r.stopped && !r.reject_no_ssr);
        let continued_rejected = count(&|r| !r.stopped && r.reject_no_ssr);
        let gained = count(&|r| !r.stopped && !r.reject_no_ssr && r.reject_ssr);
        let lost = count(&|r| !r.stopped && r.reject_no_ssr && !r.reject_ssr);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };

        Ok(Self {
            reps,
            failures,
            stop_futility_rate: rate(&|r| r.stopped),
            reject_rate_fixed: rate(&|r| r.reject_fixed),
            reject_rate_no_ssr: rate(&|r| r.reject_no_ssr),
            reject_rate_ssr: rate(&|r| r.reject_ssr),
            power_loss: rate(&|r| r.stopped && r.reject_fixed),
            mean_t: mean(records.iter().map(|r| r.t)),
            mean_t_blinded: (!blinded.is_empty()).then(|| mean(blinded.iter().copied())),
            mean_days_to_interim: mean(records.iter().map(|r| r.day)),
            mean_fraction_recruited: mean(records.iter().map(|r| r.fraction_recruited)),
            sample_size_quantiles: five_numbers(ss.iter().copied()),
            sample_size_quantiles_no_ssr: five_numbers(ss0.iter().copied()),
            mean_ss: mean(ss.iter().copied()),
            sd_ss: crate::estimator::sample_variance(&ss).sqrt(),
            mean_ss_no_ssr: mean(ss0.iter().copied()),
            sd_ss_no_ssr: crate::estimator::sample_variance(&ss0).sqrt(),
            switch_rates: SwitchRates {
                rejected_with_ssr_not_without: ratio(gained, continued_not_rejected),
                not_rejected_with_ssr_rejected_without: ratio(lost, continued_rejected),
                gained,
                continued_not_rejected,
                lost,
                continued_rejected,
            },
        })
    }
}

/// Records of a run plus its summary.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub records: Vec<ReplicationRecord>,
    /// Failed replications with their errors, in replication order.
    pub failures: Vec<(usize, Error)>,
    pub characteristics: OperatingCharacteristics,
}

/// Runs replications `0..reps` and returns each outcome in replication order.
pub fn run_replications(scenario: &Scenario, reps: usize, parallelism: Parallelism) -> Vec<Result<ReplicationRecord>> {
    match parallelism {
        Parallelism::Sequential => (0..reps).map(|r| run_replication(scenario, r)).collect(),
        Parallelism::Threads(threads) => parallel_replications(scenario, reps, threads),
    }
}

#[cfg(feature = "parallel")]
fn parallel_replications(scenario: &Scenario, reps: usize, threads: usize) -> Vec<Result<ReplicationRecord>> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_replication(scenario, r))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn parallel_replications(scenario: &Scenario, reps: usize, _threads: usize) -> Vec<Result<ReplicationRecord>> {
    run_replications(scenario, reps, Parallelism::Sequential)
}

/// Runs `reps` replications and summarizes them. Fails when more than
/// [`FAILURE_BUDGET`] of the replications fail.
pub fn run_monte_carlo(scenario: &Scenario, reps: usize, parallelism: Parallelism) -> Result<MonteCarloRun> {
    if reps == 0 {
        return Err(Error::BadConfig("reps must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for (rep, out) in run_replications(scenario, reps, parallelism).into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push((rep, e)),
        }
    }
    let budget = (FAILURE_BUDGET * reps as f64).floor() as usize;
    if failures.len() > budget {
        let (rep, e) = &failures[0];
        return Err(Error::FailureBudgetExceeded {
            failures: failures.len(),
            reps,
            budget,
            first: format!("replication {rep}: {e}"),
        });
    }
    let characteristics = OperatingCharacteristics::from_records(&records, failures.len())?;
    Ok(MonteCarloRun {
        records,
        failures,
        characteristics,
    })
}

/// Stop probability and recruitment at one targeted information fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub target_t: f64,
    pub method: Method,
    pub reps: usize,
    pub stop_rate: f64,
    pub stop_rate_se: f64,
    pub mean_fraction_recruited: f64,
    pub mean_fraction_recruited_se: f64,
    pub mean_days_to_interim: f64,
}

/// Repeats the run with the interim at each target information fraction,
/// for the proposed and the complete-case method.
pub fn recruitment_curve(
    scenario: &Scenario,
    grid: &[f64],
    reps: usize,
    parallelism: Parallelism,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for &t in grid {
        for method in [Method::Proposal, Method::Standard] {
            let mut s = scenario.with_method(method);
            s.config.interim = InterimTrigger::TargetInformation(t);
            let run = run_monte_carlo(&s, reps, parallelism)?;
            let oc = &run.characteristics;
            let fractions: Vec<f64> = run.records.iter().map(|r| r.fraction_recruited).collect();
            out.push(CurvePoint {
                target_t: t,
                method,
                reps: oc.reps,
                stop_rate: oc.stop_futility_rate,
                stop_rate_se: rate_se(oc.stop_futility_rate, oc.reps),
                mean_fraction_recruited: oc.mean_fraction_recruited,
                mean_fraction_recruited_se: mean_se(&fractions),
                mean_days_to_interim: oc.mean_days_to_interim,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }
}
