//! Synthetic portfolios and the Monte Carlo accuracy study of the IBNR estimate.

mod config;
mod portfolio;
mod study;

pub use config::{FrequencyBasis, SimulationConfig, SimulationGrid};
pub use portfolio::{simulate_portfolio, simulate_replication, SimulatedPortfolio};
pub use study::{
    interval_calibration, run_accuracy_study, run_replication, write_replications_csv,
    AccuracyResult, IntervalCalibration, ReplicationOutcome,
};
