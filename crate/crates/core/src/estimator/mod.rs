//! Nonparametric estimation of the joint claim-size / reporting-delay law.

mod em;
mod estimate;

pub use em::{
    cdf_distance, conditional_mass, em_step, fit, fit_traced, log_likelihood, FitConfig, Init,
    IterationRecord,
};
pub use estimate::{DistributionEstimate, EstimateMetadata, MarginalCell};
