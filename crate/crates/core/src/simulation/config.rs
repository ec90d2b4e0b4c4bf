use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Grid;
use crate::error::{Error, Result};

/// Period the configured claim frequency refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyBasis {
    /// Probability of a claim during one policy term.
    PerTerm,
    /// Probability of a claim on one policy-day.
    PerDay,
}

/// Estimation grid used inside each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationGrid {
    /// First positive claim-size edge.
    pub size_min: f64,
    /// Ratio between consecutive claim-size edges.
    pub size_ratio: f64,
    /// Width of the delay cells in days.
    pub delay_step: u32,
}

impl Default for SimulationGrid {
    fn default() -> Self {
        Self {
            size_min: 5.0,
            size_ratio: 1.25,
            delay_step: 15,
        }
    }
}

impl SimulationGrid {
    /// Log-spaced size edges from 0 up to at least `max_amount`, uniform delay
    /// edges up to at least `max_delay`.
    pub fn build(&self, max_amount: f64, max_delay: u32) -> Result<Grid> {
        let mut s = vec![0.0, self.size_min];
        while *s.last().unwrap() <= max_amount {
            let next = s.last().unwrap() * self.size_ratio;
            s.push(next);
        }
        Grid::new(s, Grid::uniform_tau_edges(self.delay_step, max_delay))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_policies: usize,
    pub policy_term_days: u32,
    /// Mean claim size.
    pub mean_claim: f64,
    pub frequency: f64,
    pub frequency_basis: FrequencyBasis,
    /// Lognormal shape; the location is `ln(mean_claim) − σ²/2`.
    pub severity_sigma: f64,
    /// Gamma shape of the reporting delay.
    pub delay_shape: f64,
    /// Gamma scale of the reporting delay, in days.
    pub delay_scale: f64,
    /// Mean of an exponential settlement delay after report; `None` settles on report.
    pub settlement_delay_mean_days: Option<f64>,
    pub sales_start: NaiveDate,
    /// Policies start uniformly on one of this many days.
    pub sales_window_days: u32,
    /// Days between the end of the sales window and the reporting date.
    pub reporting_offset_days: u32,
    pub limitation_days: u32,
    pub deductible: f64,
    pub replications: usize,
    pub seed: u64,
    pub grid: SimulationGrid,
    pub fit_tolerance: f64,
    pub fit_max_iterations: usize,
    /// Level of the empirical band reported for the ratios.
    pub band_level: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_policies: 10_000,
            policy_term_days: 365,
            mean_claim: 100.0,
            frequency: 0.2,
            frequency_basis: FrequencyBasis::PerTerm,
            severity_sigma: 0.9,
            delay_shape: 1.0,
            delay_scale: 1000.0,
            settlement_delay_mean_days: None,
            sales_start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            sales_window_days: 1825,
            reporting_offset_days: 0,
            limitation_days: 1095,
            deductible: 0.0,
            replications: 200,
            seed: 1,
            grid: SimulationGrid::default(),
            fit_tolerance: 1e-9,
            fit_max_iterations: 10_000,
            band_level: 0.98,
        }
    }
}

impl SimulationConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.n_policies == 0 {
            return fail("n_policies must be at least 1");
        }
        if self.policy_term_days == 0 || self.sales_window_days == 0 || self.limitation_days == 0 {
            return fail("policy_term_days, sales_window_days and limitation_days must be positive");
        }
        if !(self.mean_claim > 0.0) {
            return fail("mean_claim must be positive");
        }
        if !(0.0..1.0).contains(&self.frequency) {
            return fail("frequency must lie in [0, 1)");
        }
        if !(self.severity_sigma >= 0.0) || !(self.delay_shape > 0.0) || !(self.delay_scale > 0.0) {
            return fail("severity_sigma must be nonnegative and the delay parameters positive");
        }
        if self.settlement_delay_mean_days.is_some_and(|m| !(m > 0.0)) {
            return fail("settlement_delay_mean_days must be positive");
        }
        if !(self.deductible >= 0.0) {
            return fail("deductible must be nonnegative");
        }
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if !(self.band_level > 0.0 && self.band_level < 1.0) {
            return fail("band_level must lie in (0, 1)");
        }
        if !(self.fit_tolerance > 0.0) || self.fit_max_iterations == 0 {
            return fail("fit_tolerance and fit_max_iterations must be positive");
        }
        let g = &self.grid;
        if !(g.size_min > 0.0) || !(g.size_ratio > 1.0) || g.delay_step == 0 {
            return fail("grid needs size_min > 0, size_ratio > 1 and delay_step > 0");
        }
        Ok(())
    }

    /// Claim probability of one policy-day.
    pub fn daily_probability(&self) -> f64 {
        match self.frequency_basis {
            FrequencyBasis::PerDay => self.frequency,
            FrequencyBasis::PerTerm => {
                1.0 - (1.0 - self.frequency).powf(1.0 / self.policy_term_days as f64)
            }
        }
    }

    /// Lognormal location giving the configured mean.
    pub fn severity_location(&self) -> f64 {
        self.mean_claim.ln() - 0.5 * self.severity_sigma * self.severity_sigma
    }

    pub fn reporting_date(&self) -> NaiveDate {
        self.sales_start
            + chrono::Days::new(self.sales_window_days as u64 + self.reporting_offset_days as u64)
    }
}
