use crate::estimator::DistributionEstimate;
use crate::numeric::CompensatedSum;

/// Expected claim cost per exposure unit: representative size times mass,
/// summed over the finite cells. The zero-claim atom contributes nothing.
pub fn net_premium_daily(estimate: &DistributionEstimate) -> f64 {
    let grid = estimate.grid();
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_s() {
        let v = grid.s_representative(i);
        for j in 0..grid.n_tau() {
            acc.add(v * estimate.mass_at(i, j));
        }
    }
    acc.value()
}

/// Probability that an exposure unit carries a claim: one minus the atom.
pub fn claim_frequency_daily(estimate: &DistributionEstimate) -> f64 {
    let finite = estimate.mass()[..estimate.grid().atom()]
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .value();
    finite.clamp(0.0, 1.0)
}

/// Mean claim given that a claim occurs; `None` when no claim can occur.
pub fn average_severity(estimate: &DistributionEstimate) -> Option<f64> {
    let frequency = claim_frequency_daily(estimate);
    (frequency > 0.0).then(|| net_premium_daily(estimate) / frequency)
}

/// Outstanding liability of a portfolio: expected cost of all exposure less
/// what has already been paid.
pub fn claims_reserve(estimate: &DistributionEstimate, exposure: u64, paid_total: f64) -> f64 {
    claims_reserve_from_premium(net_premium_daily(estimate), exposure, paid_total)
}

pub fn claims_reserve_from_premium(premium_per_unit: f64, exposure: u64, paid_total: f64) -> f64 {
    premium_per_unit * exposure as f64 - paid_total
}
