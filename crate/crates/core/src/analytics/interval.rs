use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// How the normal multiplier of a tolerance band is read from its level `p`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMode {
    /// `z = Φ⁻¹(1 − (1 − p)/2)`: the band holds probability `p`.
    #[default]
    TwoSided,
    /// `z = Φ⁻¹(p)`: each tail outside the band holds `1 − p`.
    OneSided,
}

pub fn z_multiplier(p: f64, mode: QuantileMode) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("tolerance level {p} is not in (0, 1)")));
    }
    let level = match mode {
        QuantileMode::TwoSided => 1.0 - (1.0 - p) / 2.0,
        QuantileMode::OneSided => p,
    };
    Ok(Normal::standard().inverse_cdf(level))
}

/// Gaussian band `mean ± z·√variance`, lower end floored at 0.
pub fn tolerance_interval(mean: f64, variance: f64, p: f64, mode: QuantileMode) -> Result<(f64, f64)> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::InvalidInput(format!("variance {variance} is negative")));
    }
    let half = z_multiplier(p, mode)? * variance.sqrt();
    Ok(((mean - half).max(0.0), mean + half))
}
