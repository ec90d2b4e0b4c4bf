use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ibnr::{portfolio_ibnr, ExposureProfile, ScheduleRow, Window};
use super::interval::{tolerance_interval, z_multiplier, QuantileMode};
use super::premium::{average_severity, claim_frequency_daily, claims_reserve_from_premium, net_premium_daily};
use crate::error::{Error, Result};
use crate::estimator::DistributionEstimate;
use crate::numeric::{format_significant, CompensatedSum};

/// Outstanding-claims reserve computed two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ocr {
    /// Claims reserve less IBNR.
    pub by_difference: f64,
    /// Sum over outstanding claims of the expected final amount less the paid amount.
    pub by_sum: f64,
}

/// Expected final amount minus paid, summed over the profile's outstanding claims.
///
/// Each claim is conditioned on its delay cell and on the size cells from the
/// one holding the paid amount upwards; within that first cell the part above
/// the paid amount stands in (its midpoint, or the paid amount itself in the
/// unbounded top cell).
fn ocr_by_sum(estimate: &DistributionEstimate, profile: &ExposureProfile) -> Result<f64> {
    let grid = estimate.grid();
    let mut acc = CompensatedSum::new();
    for g in profile.outstanding() {
        let i0 = grid.s_bin(g.paid)?;
        let j = grid.tau_bin(g.delay)?;
        let value = |i: usize| {
            if i == i0 {
                let (_, hi) = grid.s_bounds(i);
                if hi.is_infinite() {
                    g.paid
                } else {
                    0.5 * (g.paid + hi)
                }
            } else {
                grid.s_representative(i)
            }
        };
        let mut mass = CompensatedSum::new();
        let mut first = CompensatedSum::new();
        for i in i0..grid.n_s() {
            let m = estimate.mass_at(i, j);
            mass.add(m);
            first.add(m * value(i));
        }
        let expected = if mass.value() > 0.0 {
            first.value() / mass.value()
        } else {
            let n = grid.n_s() - i0;
            (i0..grid.n_s()).map(value).sum::<f64>() / n as f64
        };
        acc.add((expected - g.paid) * g.count as f64);
    }
    Ok(acc.value())
}

pub fn ocr(
    estimate: &DistributionEstimate,
    profile: &ExposureProfile,
    claims_reserve: f64,
    ibnr: f64,
) -> Result<Ocr> {
    Ok(Ocr {
        by_difference: claims_reserve - ibnr,
        by_sum: ocr_by_sum(estimate, profile)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Tolerance level of the IBNR band.
    pub p: f64,
    pub quantile_mode: QuantileMode,
    /// Overrides the exposure counted in the profile.
    pub exposure: Option<u64>,
    /// Overrides the paid total accumulated in the profile.
    pub paid_total: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            p: 0.95,
            quantile_mode: QuantileMode::TwoSided,
            exposure: None,
            paid_total: None,
        }
    }
}

/// Headline reserving figures of a portfolio at its reporting date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReserveReport {
    pub net_premium_daily: f64,
    pub frequency_daily: f64,
    pub average_severity: Option<f64>,
    pub exposure: u64,
    pub paid_total: f64,
    pub claims_reserve: f64,
    pub ibnr_mean: f64,
    pub ibnr_sd: f64,
    pub ibnr_expected_count: f64,
    /// IBNR divided by the expected number of unreported claims.
    pub average_unreported_claim: Option<f64>,
    pub ocr_by_difference: f64,
    pub ocr_by_sum: f64,
    pub tolerance_p: f64,
    pub quantile_mode: QuantileMode,
    pub z: f64,
    pub ibnr_lower: f64,
    pub ibnr_upper: f64,
}

pub fn reserve_report(
    estimate: &DistributionEstimate,
    profile: &ExposureProfile,
    options: &ReportOptions,
) -> Result<ReserveReport> {
    let exposure = options.exposure.unwrap_or(profile.exposure());
    let paid_total = options.paid_total.unwrap_or(profile.paid_total());
    if exposure == 0 {
        return Err(Error::InvalidInput("exposure must be positive".into()));
    }
    if paid_total < 0.0 {
        return Err(Error::InvalidInput("paid total must be nonnegative".into()));
    }
    let premium = net_premium_daily(estimate);
    let reserve = claims_reserve_from_premium(premium, exposure, paid_total);
    let ibnr = portfolio_ibnr(estimate, profile, Window::all())?;
    let z = z_multiplier(options.p, options.quantile_mode)?;
    let (lower, upper) = tolerance_interval(ibnr.mean, ibnr.variance, options.p, options.quantile_mode)?;
    let ocr = ocr(estimate, profile, reserve, ibnr.mean)?;
    Ok(ReserveReport {
        net_premium_daily: premium,
        frequency_daily: claim_frequency_daily(estimate),
        average_severity: average_severity(estimate),
        exposure,
        paid_total,
        claims_reserve: reserve,
        ibnr_mean: ibnr.mean,
        ibnr_sd: ibnr.variance.sqrt(),
        ibnr_expected_count: ibnr.expected_count,
        average_unreported_claim: (ibnr.expected_count > 0.0).then(|| ibnr.mean / ibnr.expected_count),
        ocr_by_difference: ocr.by_difference,
        ocr_by_sum: ocr.by_sum,
        tolerance_p: options.p,
        quantile_mode: options.quantile_mode,
        z,
        ibnr_lower: lower,
        ibnr_upper: upper,
    })
}

/// Writes the schedule as `t_lo,t_hi,lower,mean,upper,sd,expected_claims`;
/// money with 2 decimals, counts with 6 significant digits, `inf` for an open end.
pub fn write_schedule_csv<W: Write>(out: W, rows: &[ScheduleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_lo", "t_hi", "lower", "mean", "upper", "sd", "expected_claims"])?;
    for r in rows {
        w.write_record([
            r.window.start.to_string(),
            r.window.end.map_or_else(|| "inf".to_string(), |e| e.to_string()),
            format!("{:.2}", r.lower),
            format!("{:.2}", r.mean),
            format!("{:.2}", r.upper),
            format!("{:.2}", r.sd),
            format_significant(r.expected_count, 6),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<schedule>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CensoredObservation, Censoring, Grid};

    fn outstanding(paid: f64, delay: u32) -> CensoredObservation {
        CensoredObservation {
            censoring: Censoring::Outstanding { paid, delay },
            elapsed: 5,
            deductible: 0.0,
            limitation: 10,
        }
    }

    fn estimate() -> DistributionEstimate {
        // Size cells [0,10) [10,20) [20,∞); one delay cell [0,11).
        let g = Grid::new(vec![0.0, 10.0, 20.0], vec![0, 11]).unwrap();
        DistributionEstimate::from_mass(g, vec![0.1, 0.2, 0.1, 0.6]).unwrap()
    }

    #[test]
    fn ocr_single_outstanding_claim() {
        let e = estimate();
        let p = ExposureProfile::from_observations([outstanding(12.0, 3)]);
        let o = ocr(&e, &p, 100.0, 30.0).unwrap();
        assert_eq!(o.by_difference, 70.0);
        // Cells [10,20) → midpoint of [12,20) = 16, weight 0.2; [20,∞) → 20, weight 0.1.
        let expected = (16.0 * 0.2 + 20.0 * 0.1) / 0.3;
        assert!((o.by_sum - (expected - 12.0)).abs() < 1e-12);
    }

    #[test]
    fn ocr_without_outstanding_claims_is_zero() {
        let e = estimate();
        let o = ocr(&e, &ExposureProfile::new(), 5.0, 1.0).unwrap();
        assert_eq!(o.by_sum, 0.0);
        assert_eq!(o.by_difference, 4.0);
    }

    #[test]
    fn report_identities() {
        let e = estimate();
        let mut p = ExposureProfile::new();
        p.add(
            &CensoredObservation {
                censoring: Censoring::NotReported,
                elapsed: 2,
                deductible: 0.0,
                limitation: 10,
            },
            20,
        );
        p.add(&outstanding(12.0, 3), 1);
        let r = reserve_report(&e, &p, &ReportOptions::default()).unwrap();
        assert_eq!(r.exposure, 21);
        assert_eq!(r.paid_total, 12.0);
        assert_eq!(r.claims_reserve + r.paid_total, r.net_premium_daily * 21.0);
        assert_eq!(r.ocr_by_difference, r.claims_reserve - r.ibnr_mean);
        assert!(r.ibnr_lower <= r.ibnr_mean && r.ibnr_mean <= r.ibnr_upper);
        let sev = r.average_severity.unwrap();
        assert!((sev * r.frequency_daily - r.net_premium_daily).abs() < 1e-12);
    }

    #[test]
    fn schedule_csv_shape() {
        let rows = [ScheduleRow {
            window: Window::new(0, Some(90)).unwrap(),
            lower: 0.0,
            mean: 1234.5678,
            upper: 2000.0,
            sd: 3.0,
            expected_count: 143.912345,
        }];
        let mut buf = Vec::new();
        write_schedule_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t_lo,t_hi,lower,mean,upper,sd,expected_claims\n0,90,0.00,1234.57,2000.00,3.00,143.912\n"
        );
    }
}
