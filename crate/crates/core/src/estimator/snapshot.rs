//! Patient tables and what of them is visible at an interim look.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Frame;

/// Name of the short-term endpoint column inside [`TrialData::frame`].
pub const X_COLUMN: &str = "x";

/// One subject as it appears in an input dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub arm: u8,
    /// Baseline covariate values, aligned with the table's covariate names.
    pub covariates: Vec<f64>,
    pub x: Option<u8>,
    pub y: Option<u8>,
    pub arrival_day: f64,
}

/// Delays (days after randomization) until the short-term and the primary
/// endpoint are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lags {
    pub x: f64,
    pub y: f64,
}

impl Lags {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && x >= 0.0 && x < y) {
            return Err(Error::BadConfig(format!(
                "lags must satisfy 0 <= L_X < L_Y, got L_X = {x}, L_Y = {y}"
            )));
        }
        Ok(Self { x, y })
    }
}

/// Column-oriented patient table.
///
/// `frame` holds the baseline covariates and, for designs with a short-term
/// endpoint, an `x` column (NaN where X is missing in the data).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    ids: Vec<String>,
    arm: Vec<u8>,
    x: Option<Vec<f64>>,
    y: Vec<f64>,
    arrival_day: Vec<f64>,
    covariate_names: Vec<String>,
    frame: Frame,
}

impl TrialData {
    /// Builds a table from columns. `x = None` declares a design without a
    /// short-term endpoint. Missing outcomes are `None`.
    pub fn new(
        ids: Vec<String>,
        arm: Vec<u8>,
        covariates: Frame,
        x: Option<Vec<Option<u8>>>,
        y: Vec<Option<u8>>,
        arrival_day: Vec<f64>,
    ) -> Result<Self> {
        let n = arm.len();
        if ids.len() != n || y.len() != n || arrival_day.len() != n || covariates.n_rows() != n {
            return Err(Error::InvalidInput("patient columns differ in length".into()));
        }
        if let Some(x) = &x {
            if x.len() != n {
                return Err(Error::InvalidInput("patient columns differ in length".into()));
            }
        }
        if covariates.names().iter().any(|c| c == X_COLUMN) {
            return Err(Error::InvalidInput(format!(
                "`{X_COLUMN}` is reserved for the short-term endpoint"
            )));
        }
        let binary = |v: Option<u8>, what: &str, i: usize| -> Result<f64> {
            match v {
                None => Ok(f64::NAN),
                Some(b @ (0 | 1)) => Ok(b as f64),
                Some(b) => Err(Error::InvalidInput(format!(
                    "patient `{}`: {what} must be 0 or 1, got {b}",
                    ids[i]
                ))),
            }
        };
        for i in 0..n {
            if arm[i] > 1 {
                return Err(Error::InvalidInput(format!(
                    "patient `{}`: arm must be 0 or 1, got {}",
                    ids[i], arm[i]
                )));
            }
            if !arrival_day[i].is_finite() || arrival_day[i] < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "patient `{}`: arrival day must be finite and non-negative",
                    ids[i]
                )));
            }
        }
        let y = y
            .into_iter()
            .enumerate()
            .map(|(i, v)| binary(v, "y", i))
            .collect::<Result<Vec<_>>>()?;
        let x = match x {
            Some(x) => Some(
                x.into_iter()
                    .enumerate()
                    .map(|(i, v)| binary(v, "x", i))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let covariate_names = covariates.names().to_vec();
        let mut frame = covariates;
        if let Some(x) = &x {
            frame.push_column(X_COLUMN, x.clone());
        }
        Ok(Self {
            ids,
            arm,
            x,
            y,
            arrival_day,
            covariate_names,
            frame,
        })
    }

    pub fn from_records(covariate_names: &[String], records: &[PatientRecord], has_x: bool) -> Result<Self> {
        let n = records.len();
        let mut frame = Frame::new(n);
        for (j, name) in covariate_names.iter().enumerate() {
            let col = records
                .iter()
                .map(|r| {
                    r.covariates
                        .get(j)
                        .copied()
                        .ok_or_else(|| Error::InvalidInput(format!("patient `{}` lacks covariate `{name}`", r.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            frame.push_column(name.clone(), col);
        }
        Self::new(
            records.iter().map(|r| r.id.clone()).collect(),
            records.iter().map(|r| r.arm).collect(),
            frame,
            has_x.then(|| records.iter().map(|r| r.x).collect()),
            records.iter().map(|r| r.y).collect(),
            records.iter().map(|r| r.arrival_day).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.arm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arm.is_empty()
    }

    pub fn has_x(&self) -> bool {
        self.x.is_some()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn arm(&self, i: usize) -> u8 {
        self.arm[i]
    }

    pub fn arms(&self) -> &[u8] {
        &self.arm
    }

    pub fn x(&self, i: usize) -> Option<f64> {
        self.x.as_ref().map(|x| x[i]).filter(|v| !v.is_nan())
    }

    pub fn y(&self, i: usize) -> Option<f64> {
        Some(self.y[i]).filter(|v| !v.is_nan())
    }

    pub fn arrival_day(&self, i: usize) -> f64 {
        self.arrival_day[i]
    }

    pub fn arrival_days(&self) -> &[f64] {
        &self.arrival_day
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Covariates plus the `x` column.
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn record(&self, i: usize) -> PatientRecord {
        PatientRecord {
            id: self.ids[i].clone(),
            arm: self.arm[i],
            covariates: self
                .covariate_names
                .iter()
                .map(|c| self.frame.column(c).expect("covariate column")[i])
                .collect(),
            x: self.x(i).map(|v| v as u8),
            y: self.y(i).map(|v| v as u8),
            arrival_day: self.arrival_day[i],
        }
    }
}

/// Observation pattern of a patient at the interim look.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cohort {
    /// Z, X and Y observed.
    Complete = 1,
    /// Z and X observed.
    ShortTerm = 2,
    /// Only Z observed.
    Baseline = 3,
    /// Not yet recruited.
    NotRecruited = 4,
}

impl Cohort {
    pub fn recruited(self) -> bool {
        self != Cohort::NotRecruited
    }

    pub fn c_x(self) -> bool {
        matches!(self, Cohort::Complete | Cohort::ShortTerm)
    }

    pub fn c_y(self) -> bool {
        self == Cohort::Complete
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Patient indices per cohort.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortPartition {
    pub complete: Vec<usize>,
    pub short_term: Vec<usize>,
    pub baseline: Vec<usize>,
    pub not_recruited: Vec<usize>,
}

impl CohortPartition {
    pub fn get(&self, cohort: Cohort) -> &[usize] {
        match cohort {
            Cohort::Complete => &self.complete,
            Cohort::ShortTerm => &self.short_term,
            Cohort::Baseline => &self.baseline,
            Cohort::NotRecruited => &self.not_recruited,
        }
    }

    pub fn counts(&self) -> [usize; 4] {
        [
            self.complete.len(),
            self.short_term.len(),
            self.baseline.len(),
            self.not_recruited.len(),
        ]
    }
}

/// The data as visible at an interim look: the patient table plus each
/// patient's observation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct InterimSnapshot {
    data: Arc<TrialData>,
    calendar_time: Option<f64>,
    lags: Option<Lags>,
    cohorts: Vec<Cohort>,
}

impl InterimSnapshot {
    /// Observation indicators implied by arrival days and lags at `day`.
    /// Only the first `n_patients` rows of `data` belong to the trial; the
    /// rest are treated as never recruited.
    pub fn at_calendar_time(data: Arc<TrialData>, n_patients: usize, day: f64, lags: Lags) -> Self {
        let has_x = data.has_x();
        let cohorts = (0..data.len())
            .map(|i| {
                if i >= n_patients {
                    return Cohort::NotRecruited;
                }
                let elapsed = day - data.arrival_day(i);
                if elapsed < 0.0 {
                    Cohort::NotRecruited
                } else if elapsed >= lags.y {
                    Cohort::Complete
                } else if has_x && elapsed >= lags.x {
                    Cohort::ShortTerm
                } else {
                    Cohort::Baseline
                }
            })
            .collect();
        Self {
            data,
            calendar_time: Some(day),
            lags: Some(lags),
            cohorts,
        }
    }

    /// Observation indicators read off which outcomes are present. Every
    /// row counts as recruited.
    pub fn from_observed(data: Arc<TrialData>) -> Result<Self> {
        let cohorts = (0..data.len())
            .map(|i| {
                let has_y = data.y(i).is_some();
                let has_x = if data.has_x() { data.x(i).is_some() } else { has_y };
                match (has_x, has_y) {
                    (true, true) => Ok(Cohort::Complete),
                    (true, false) => Ok(Cohort::ShortTerm),
                    (false, false) => Ok(Cohort::Baseline),
                    (false, true) => Err(Error::InconsistentIndicators {
                        id: data.id(i).to_string(),
                        reason: "primary outcome observed without the short-term outcome".into(),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            data,
            calendar_time: None,
            lags: None,
            cohorts,
        })
    }

    /// Builds a snapshot from explicit cohorts, checking them against the data.
    pub fn with_cohorts(data: Arc<TrialData>, cohorts: Vec<Cohort>) -> Result<Self> {
        if cohorts.len() != data.len() {
            return Err(Error::InvalidInput("one cohort per patient required".into()));
        }
        for (i, c) in cohorts.iter().enumerate() {
            let bad = |reason: &str| Error::InconsistentIndicators {
                id: data.id(i).to_string(),
                reason: reason.into(),
            };
            if c.c_y() && data.y(i).is_none() {
                return Err(bad("cohort 1 without a primary outcome"));
            }
            if c.c_x() && data.has_x() && data.x(i).is_none() {
                return Err(bad("short-term outcome marked observed but missing"));
            }
            if *c == Cohort::ShortTerm && !data.has_x() {
                return Err(bad("cohort 2 in a design without a short-term endpoint"));
            }
        }
        Ok(Self {
            data,
            calendar_time: None,
            lags: None,
            cohorts,
        })
    }

    /// Only the complete cases count as recruited.
    pub fn complete_cases(&self) -> Self {
        self.keep(|c| c == Cohort::Complete)
    }

    /// Patients without the short-term outcome are ignored.
    pub fn without_baseline_only(&self) -> Self {
        self.keep(|c| c != Cohort::Baseline)
    }

    fn keep(&self, pred: impl Fn(Cohort) -> bool) -> Self {
        Self {
            data: Arc::clone(&self.data),
            calendar_time: self.calendar_time,
            lags: self.lags,
            cohorts: self
                .cohorts
                .iter()
                .map(|&c| if pred(c) { c } else { Cohort::NotRecruited })
                .collect(),
        }
    }

    pub fn data(&self) -> &TrialData {
        &self.data
    }

    pub fn shared_data(&self) -> Arc<TrialData> {
        Arc::clone(&self.data)
    }

    pub fn calendar_time(&self) -> Option<f64> {
        self.calendar_time
    }

    pub fn lags(&self) -> Option<Lags> {
        self.lags
    }

    pub fn cohort(&self, i: usize) -> Cohort {
        self.cohorts[i]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohorts
    }

    pub fn partition(&self) -> CohortPartition {
        let mut p = CohortPartition::default();
        for (i, c) in self.cohorts.iter().enumerate() {
            match c {
                Cohort::Complete => p.complete.push(i),
                Cohort::ShortTerm => p.short_term.push(i),
                Cohort::Baseline => p.baseline.push(i),
                Cohort::NotRecruited => p.not_recruited.push(i),
            }
        }
        p
    }

    /// Indices of recruited patients, in table order.
    pub fn recruited(&self) -> Vec<usize> {
        (0..self.cohorts.len())
            .filter(|&i| self.cohorts[i].recruited())
            .collect()
    }

    pub fn n_recruited(&self) -> usize {
        self.cohorts.iter().filter(|c| c.recruited()).count()
    }

    fn count(&self, pred: impl Fn(usize, Cohort) -> bool) -> usize {
        self.cohorts.iter().enumerate().filter(|(i, c)| pred(*i, **c)).count()
    }

    /// Share of recruited patients randomized to the treatment arm.
    pub fn pi_hat(&self) -> f64 {
        let treated = self.count(|i, c| c.recruited() && self.data.arm(i) == 1);
        treated as f64 / self.n_recruited() as f64
    }

    /// Share of recruited patients with the short-term outcome observed.
    pub fn pi_x_hat(&self) -> f64 {
        self.count(|_, c| c.c_x()) as f64 / self.n_recruited() as f64
    }

    /// Share of patients with the short-term outcome who also have the primary one.
    pub fn pi_y_hat(&self) -> f64 {
        self.count(|_, c| c.c_y()) as f64 / self.count(|_, c| c.c_x()) as f64
    }
}

/// Patient indices per cohort of `snapshot`.
pub fn partition_cohorts(snapshot: &InterimSnapshot) -> CohortPartition {
    snapshot.partition()
}
