//! Trial simulation: scenario configuration, data generation, the full
//! interim pipeline per replication and Monte Carlo summaries.

pub mod config;
pub mod generate;
pub mod monte_carlo;
pub mod replicate;
pub mod rsquared;

pub use config::{
    BoundaryConfig, CovariateSource, CovariateTable, InterimTrigger, LinearPredictor, Scenario, ScenarioConfig,
    SsrConfig, WorkingModelsConfig, DAYS_PER_MONTH,
};
pub use generate::{generate_trial, replication_rng};
pub use monte_carlo::{
    rate_se, recruitment_curve, run_monte_carlo, run_replications, CurvePoint, MonteCarloRun, OperatingCharacteristics,
    Parallelism,
};
pub use replicate::{interim_look, naive_final_test, run_replication, snapshot_at, InterimLook, ReplicationRecord};
pub use rsquared::{compute_r_squared, RSquared};
