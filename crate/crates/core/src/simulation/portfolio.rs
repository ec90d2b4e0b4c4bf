use chrono::{Days, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Geometric, LogNormal};

use super::config::SimulationConfig;
use crate::data::{ClaimRecord, PolicyRecord};
use crate::error::{Error, Result};

/// Registers of one synthetic portfolio as known at its reporting date,
/// together with what is still unknown at that date.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPortfolio {
    pub policies: Vec<PolicyRecord>,
    /// Claims reported on or before the reporting date.
    pub claims: Vec<ClaimRecord>,
    pub reporting_date: NaiveDate,
    /// Total of the claims that occurred by the reporting date and will be
    /// reported after it, within the limitation period.
    pub true_unreported_total: f64,
    pub true_unreported_count: u64,
}

impl SimulatedPortfolio {
    /// Largest amount recorded in the claims register.
    pub fn max_recorded_amount(&self) -> f64 {
        self.claims.iter().map(|c| c.paid_to_date).fold(0.0, f64::max)
    }
}

fn dist_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Simulates one portfolio from `seed`.
pub fn simulate_portfolio(config: &SimulationConfig, seed: u64) -> Result<SimulatedPortfolio> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(config, &mut rng)
}

/// Portfolio of replication `r` in a study: stream `r` of the configured seed.
pub fn simulate_replication(config: &SimulationConfig, r: usize) -> Result<SimulatedPortfolio> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(r as u64);
    simulate_with(config, &mut rng)
}

fn simulate_with(config: &SimulationConfig, rng: &mut ChaCha8Rng) -> Result<SimulatedPortfolio> {
    config.validate()?;
    let t = config.reporting_date();
    let p = config.daily_probability();
    let gaps = if p > 0.0 {
        Some(Geometric::new(p).map_err(dist_err)?)
    } else {
        None
    };
    let size = LogNormal::new(config.severity_location(), config.severity_sigma).map_err(dist_err)?;
    let delay = Gamma::new(config.delay_shape, config.delay_scale).map_err(dist_err)?;
    let settle = config
        .settlement_delay_mean_days
        .map(|m| Exp::new(1.0 / m).map_err(dist_err))
        .transpose()?;
    let limit = config.limitation_days as u64;

    let mut policies = Vec::with_capacity(config.n_policies);
    let mut claims = Vec::new();
    let mut unreported_total = 0.0;
    let mut unreported_count = 0;
    for i in 0..config.n_policies {
        let start = config.sales_start + Days::new(rng.gen_range(0..config.sales_window_days) as u64);
        let end = start + Days::new(config.policy_term_days as u64);
        let policy_id = format!("P{i:06}");
        policies.push(PolicyRecord {
            policy_id: policy_id.clone(),
            start_date: start,
            end_date: end,
            deductible: config.deductible,
            limitation_days: Some(config.limitation_days),
            row: 0,
        });
        let Some(gaps) = &gaps else { continue };
        // Occurrence days are observed up to and including the reporting date.
        let days = (end.min(t + Days::new(1)) - start).num_days() as u64;
        let mut day = gaps.sample(rng);
        let mut k = 0;
        while day < days {
            let occurrence = start + Days::new(day);
            day += 1 + gaps.sample(rng);
            let amount = size.sample(rng);
            let lag = delay.sample(rng).floor() as u64;
            if amount <= config.deductible || lag > limit {
                continue;
            }
            let report = occurrence + Days::new(lag);
            if report > t {
                unreported_total += amount;
                unreported_count += 1;
                continue;
            }
            let settlement = match &settle {
                None => Some(report),
                Some(exp) => Some(report + Days::new(exp.sample(rng).floor() as u64)).filter(|d| *d <= t),
            };
            claims.push(ClaimRecord {
                policy_id: policy_id.clone(),
                claim_id: format!("C{i:06}-{k}"),
                occurrence_date: occurrence,
                report_date: report,
                settlement_date: settlement,
                paid_to_date: if settlement.is_some() { amount } else { 0.0 },
                settled: settlement.is_some(),
                row: 0,
            });
            k += 1;
        }
    }
    Ok(SimulatedPortfolio {
        policies,
        claims,
        reporting_date: t,
        true_unreported_total: unreported_total,
        true_unreported_count: unreported_count,
    })
}
