use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::config::SimulationConfig;
use super::portfolio::simulate_replication;
use crate::analytics::{portfolio_ibnr, z_multiplier, ExposureProfile, QuantileMode, Window};
use crate::data::{group_counted, SampleBuilder, SampleConfig, TimeUnit};
use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, Init};
use crate::numeric::{compensated_sum, quantile_sorted};

/// One simulated portfolio and its IBNR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    /// Estimated IBNR.
    pub estimate: f64,
    /// Variance attached to the estimate, summed over unreported units.
    pub variance: f64,
    pub expected_count: f64,
    pub true_total: f64,
    pub true_count: u64,
    /// `estimate / true_total`; `None` when nothing was left unreported.
    pub ratio: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Replication `r` of the study: a portfolio drawn from stream `r` of the
/// configured seed, fitted and evaluated.
pub fn run_replication(config: &SimulationConfig, r: usize) -> Result<ReplicationOutcome> {
    let portfolio = simulate_replication(config, r)?;
    let sample_config = SampleConfig {
        unit: TimeUnit::Day,
        default_limitation_days: config.limitation_days,
    };
    let builder = SampleBuilder::new(
        &portfolio.policies,
        &portfolio.claims,
        portfolio.reporting_date,
        &sample_config,
    )?;
    let counted = builder.counted_observations();
    let grid = config
        .grid
        .build(portfolio.max_recorded_amount(), config.limitation_days)?;
    let grouped = group_counted(counted.iter().copied(), &grid)?;
    let estimate = fit(
        &grouped,
        &FitConfig {
            tolerance: config.fit_tolerance,
            max_iterations: config.fit_max_iterations,
            init: Init::Uniform,
        },
    )?;
    let mut profile = ExposureProfile::new();
    for (obs, count) in &counted {
        profile.add(obs, *count);
    }
    let ibnr = portfolio_ibnr(&estimate, &profile, Window::all())?;
    let true_total = portfolio.true_unreported_total;
    Ok(ReplicationOutcome {
        replication: r,
        estimate: ibnr.mean,
        variance: ibnr.variance,
        expected_count: ibnr.expected_count,
        true_total,
        true_count: portfolio.true_unreported_count,
        ratio: (true_total > 0.0).then(|| ibnr.mean / true_total),
        iterations: estimate.iterations,
        converged: estimate.converged,
    })
}

/// Summary of the estimate-to-truth ratios over all replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyResult {
    pub n_policies: usize,
    pub replications: usize,
    /// Replications without unreported claims, left out of the ratio statistics.
    pub excluded: usize,
    pub non_converged: usize,
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub skewness: f64,
    pub mean_estimate: f64,
    pub mean_true_total: f64,
    pub band_level: f64,
    pub band_lower: f64,
    pub band_upper: f64,
    #[serde(skip)]
    pub outcomes: Vec<ReplicationOutcome>,
}

impl AccuracyResult {
    pub fn ratios(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.ratio).collect()
    }

    fn from_outcomes(config: &SimulationConfig, outcomes: Vec<ReplicationOutcome>) -> Result<Self> {
        let mut ratios: Vec<f64> = outcomes.iter().filter_map(|o| o.ratio).collect();
        if ratios.is_empty() {
            return Err(Error::InvalidInput(
                "no replication left claims unreported; ratios are undefined".into(),
            ));
        }
        let n = ratios.len() as f64;
        let mean = compensated_sum(ratios.iter().copied()) / n;
        let m2 = compensated_sum(ratios.iter().map(|r| (r - mean).powi(2))) / n;
        let m3 = compensated_sum(ratios.iter().map(|r| (r - mean).powi(3))) / n;
        let variance = if ratios.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        ratios.sort_by(f64::total_cmp);
        let count = outcomes.len() as f64;
        let tail = (1.0 - config.band_level) / 2.0;
        Ok(Self {
            n_policies: config.n_policies,
            replications: outcomes.len(),
            excluded: outcomes.len() - ratios.len(),
            non_converged: outcomes.iter().filter(|o| !o.converged).count(),
            mean,
            median: quantile_sorted(&ratios, 0.5),
            variance,
            skewness,
            mean_estimate: compensated_sum(outcomes.iter().map(|o| o.estimate)) / count,
            mean_true_total: compensated_sum(outcomes.iter().map(|o| o.true_total)) / count,
            band_level: config.band_level,
            band_lower: quantile_sorted(&ratios, tail),
            band_upper: quantile_sorted(&ratios, 1.0 - tail),
            outcomes,
        })
    }
}

/// Runs every replication (in parallel, each on its own random stream) and
/// summarizes them in replication order.
pub fn run_accuracy_study(config: &SimulationConfig) -> Result<AccuracyResult> {
    config.validate()?;
    let outcomes = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;
    AccuracyResult::from_outcomes(config, outcomes)
}

/// Width of the empirical band of the IBNR estimates against the mean width of
/// the Gaussian band `±z·sd` attached to each estimate. The same comparison on
/// the ratio scale, where the ratios divide by each replication's realized
/// total and the analytic band by the mean realized total, is reported
/// alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalCalibration {
    pub level: f64,
    pub empirical_width: f64,
    pub analytic_width: f64,
    /// `empirical_width / analytic_width − 1`.
    pub excess: f64,
    pub ratio_empirical_width: f64,
    pub ratio_analytic_width: f64,
    /// `ratio_empirical_width / ratio_analytic_width − 1`.
    pub ratio_excess: f64,
}

fn band_width(mut values: Vec<f64>, level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    quantile_sorted(&values, 1.0 - tail) - quantile_sorted(&values, tail)
}

pub fn interval_calibration(result: &AccuracyResult, level: f64) -> Result<IntervalCalibration> {
    let z = z_multiplier(level, QuantileMode::TwoSided)?;
    if result.outcomes.is_empty() {
        return Err(Error::InvalidInput("no replications".into()));
    }
    let empirical_width = band_width(result.outcomes.iter().map(|o| o.estimate).collect(), level);
    let analytic_width = 2.0 * z * compensated_sum(result.outcomes.iter().map(|o| o.variance.sqrt()))
        / result.outcomes.len() as f64;
    let ratios = result.ratios();
    let ratio_empirical_width = if ratios.is_empty() {
        f64::NAN
    } else {
        band_width(ratios, level)
    };
    let ratio_analytic_width = analytic_width / result.mean_true_total;
    Ok(IntervalCalibration {
        level,
        empirical_width,
        analytic_width,
        excess: empirical_width / analytic_width - 1.0,
        ratio_empirical_width,
        ratio_analytic_width,
        ratio_excess: ratio_empirical_width / ratio_analytic_width - 1.0,
    })
}

/// Per-replication CSV with full-precision values.
pub fn write_replications_csv<W: Write>(out: W, outcomes: &[ReplicationOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replication",
        "estimate",
        "sd",
        "expected_count",
        "true_total",
        "true_count",
        "ratio",
        "iterations",
        "converged",
    ])?;
    for o in outcomes {
        w.write_record([
            o.replication.to_string(),
            o.estimate.to_string(),
            o.variance.sqrt().to_string(),
            o.expected_count.to_string(),
            o.true_total.to_string(),
            o.true_count.to_string(),
            o.ratio.map_or_else(String::new, |r| r.to_string()),
            o.iterations.to_string(),
            o.converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<replications>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig {
            n_policies: 60,
            replications: 3,
            seed: 7,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn study_is_deterministic() {
        let a = run_accuracy_study(&small()).unwrap();
        let b = run_accuracy_study(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replications, 3);
        assert!(a.outcomes.iter().all(|o| o.estimate >= 0.0));
    }

    #[test]
    fn replications_do_not_depend_on_each_other() {
        let c = small();
        let all = run_accuracy_study(&c).unwrap();
        let second = run_replication(&c, 2).unwrap();
        assert_eq!(all.outcomes[2], second);
    }

    #[test]
    fn single_replication_band_is_degenerate() {
        let c = SimulationConfig {
            replications: 1,
            ..small()
        };
        let r = run_accuracy_study(&c).unwrap();
        if let Some(k) = r.outcomes[0].ratio {
            assert_eq!((r.band_lower, r.median, r.band_upper), (k, k, k));
            assert_eq!(r.variance, 0.0);
        }
    }
}
