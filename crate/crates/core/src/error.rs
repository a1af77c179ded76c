use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("IRLS did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("complete separation: coefficient `{term}` diverged ({value:.3})")]
    CompleteSeparation { term: String, value: f64 },

    #[error("design matrix is rank deficient (term `{term}` is collinear with earlier terms)")]
    RankDeficient { term: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid model input: {0}")]
    InvalidInput(String),

    #[error("formula error: {0}")]
    Formula(String),

    #[error("inconsistent observation indicators for patient `{id}`: {reason}")]
    InconsistentIndicators { id: String, reason: String },

    #[error("no complete cases (cohort 1) in {0}")]
    EmptyCohort1(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("information fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("observed-effect drift requires a positive interim statistic, got {0}")]
    NonPositiveTheta(f64),

    #[error("imputation model `{model}` failed: {source}")]
    Imputation {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("bad scenario configuration: {0}")]
    BadConfig(String),

    #[error("interim trigger unreachable: {0}")]
    TriggerUnreachable(String),

    #[error("{failures} of {reps} replications failed (budget {budget}); first failure: {first}")]
    FailureBudgetExceeded {
        failures: usize,
        reps: usize,
        budget: usize,
        first: String,
    },
}

impl Error {
    /// True for errors raised while estimating (as opposed to configuration or input errors).
    pub fn is_estimation_failure(&self) -> bool {
        !matches!(
            self,
            Error::BadConfig(_)
                | Error::Formula(_)
                | Error::InconsistentIndicators { .. }
                | Error::MissingColumn(_)
                | Error::FailureBudgetExceeded { .. }
        )
    }
}
