//! Random registers for property tests.
#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qed_reserving::data::{ClaimRecord, Grid, PolicyRecord, SampleConfig};

pub const DEFAULT_LIMITATION: u32 = 40;

/// Policies and every claim they will ever produce, reported or not.
pub struct World {
    pub policies: Vec<PolicyRecord>,
    pub claims: Vec<ClaimRecord>,
    /// A reporting date inside the simulated period.
    pub t: NaiveDate,
}

pub fn base() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

pub fn config() -> SampleConfig {
    SampleConfig {
        default_limitation_days: DEFAULT_LIMITATION,
        ..SampleConfig::default()
    }
}

/// Covers every amount and delay [`world`] can produce.
pub fn grid() -> Grid {
    Grid::new(
        vec![0.0, 10.0, 20.0, 50.0, 100.0, 200.0, 400.0],
        Grid::uniform_tau_edges(7, 60),
    )
    .unwrap()
}

pub fn world(seed: u64, max_policies: usize) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_policies);
    let mut policies = Vec::with_capacity(n);
    let mut claims = Vec::new();
    for i in 0..n {
        let start = base() + Days::new(rng.gen_range(0..120));
        let term = rng.gen_range(1..90u64);
        let deductible = [0.0, 20.0, 50.0][rng.gen_range(0..3)];
        let limitation = rng.gen_bool(0.7).then(|| rng.gen_range(5..=60u32));
        let l = limitation.unwrap_or(DEFAULT_LIMITATION) as u64;
        let policy_id = format!("P{i}");
        for day in 0..term {
            if !rng.gen_bool(0.12) {
                continue;
            }
            let occurrence = start + Days::new(day);
            let report = occurrence + Days::new(rng.gen_range(0..=l));
            let amount = deductible + rng.gen_range(0.5..300.0);
            let settlement = rng
                .gen_bool(0.7)
                .then(|| report + Days::new(rng.gen_range(0..30)));
            let paid = if settlement.is_some() {
                amount
            } else {
                amount * rng.gen_range(0.0..1.0)
            };
            claims.push(ClaimRecord {
                policy_id: policy_id.clone(),
                claim_id: format!("C{i}-{day}"),
                occurrence_date: occurrence,
                report_date: report,
                settlement_date: settlement,
                paid_to_date: paid,
                settled: settlement.is_some(),
                row: 0,
            });
        }
        policies.push(PolicyRecord {
            policy_id,
            start_date: start,
            end_date: start + Days::new(term),
            deductible,
            limitation_days: limitation,
            row: 0,
        });
    }
    let t = base() + Days::new(rng.gen_range(30..250));
    World { policies, claims, t }
}

impl World {
    /// Claims register as known at `t`: claims that have occurred by then.
    pub fn claims_at(&self, t: NaiveDate) -> Vec<ClaimRecord> {
        self.claims
            .iter()
            .filter(|c| c.occurrence_date <= t)
            .cloned()
            .collect()
    }
}
