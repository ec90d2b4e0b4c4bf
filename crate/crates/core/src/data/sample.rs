use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::records::{ClaimRecord, PolicyRecord};
use crate::error::{Error, Result};

/// Length of the exposure unit `Δt` into which policy periods are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// One calendar day.
    #[default]
    Day,
    /// One calendar month; policies must start and end on the 1st.
    Month,
}

impl TimeUnit {
    /// Ordinal of the unit containing `date`.
    pub fn index(self, date: NaiveDate) -> i64 {
        match self {
            TimeUnit::Day => date.num_days_from_ce() as i64,
            TimeUnit::Month => date.year() as i64 * 12 + date.month0() as i64,
        }
    }

    /// Converts a limitation period given in days into whole units.
    pub fn limitation_units(self, days: u32) -> u32 {
        match self {
            TimeUnit::Day => days,
            TimeUnit::Month => ((days as f64 * 12.0 / 365.25).round() as u32).max(1),
        }
    }

    fn aligned(self, date: NaiveDate) -> bool {
        match self {
            TimeUnit::Day => true,
            TimeUnit::Month => date.day() == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub unit: TimeUnit,
    /// Limitation period for policies that do not carry their own.
    pub default_limitation_days: u32,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            unit: TimeUnit::Day,
            default_limitation_days: 3 * 365,
        }
    }
}

/// Claim status δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Status {
    Settled = 0,
    ReportedOutstanding = 1,
    NotReported = 2,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// What is known at the reporting date about the claim of one exposure unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Censoring {
    /// Settled claim: exact amount and delay.
    Settled { amount: f64, delay: u32 },
    /// Reported, not settled: the final amount is at least `paid`.
    Outstanding { paid: f64, delay: u32 },
    /// Nothing reported yet while a report is still possible.
    NotReported,
    /// Limitation period expired without a report: the `(0, ∞)` point.
    ZeroClaim,
}

/// Reporting-delay information carried by an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayInfo {
    Exact(u32),
    /// Delay is strictly greater than the value (the elapsed time).
    After(u32),
    Infinite,
}

/// One exposure unit of one policy at the reporting date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredObservation {
    pub censoring: Censoring,
    /// Units from the start of the exposure unit to the reporting date, `t − τ¹`.
    pub elapsed: u32,
    pub deductible: f64,
    /// Limitation period in units.
    pub limitation: u32,
}

impl CensoredObservation {
    pub fn status(&self) -> Status {
        match self.censoring {
            Censoring::Settled { .. } | Censoring::ZeroClaim => Status::Settled,
            Censoring::Outstanding { .. } => Status::ReportedOutstanding,
            Censoring::NotReported => Status::NotReported,
        }
    }

    pub fn zero_claim(&self) -> bool {
        matches!(self.censoring, Censoring::ZeroClaim)
    }

    /// Exact amount (settled), lower bound (outstanding or not reported, where
    /// the bound is the deductible), or 0 for the zero claim.
    pub fn amount(&self) -> f64 {
        match self.censoring {
            Censoring::Settled { amount, .. } => amount,
            Censoring::Outstanding { paid, .. } => paid,
            Censoring::NotReported => self.deductible,
            Censoring::ZeroClaim => 0.0,
        }
    }

    pub fn delay(&self) -> DelayInfo {
        match self.censoring {
            Censoring::Settled { delay, .. } | Censoring::Outstanding { delay, .. } => {
                DelayInfo::Exact(delay)
            }
            Censoring::NotReported => DelayInfo::After(self.elapsed),
            Censoring::ZeroClaim => DelayInfo::Infinite,
        }
    }
}

struct PolicyPlan {
    first: i64,
    /// Exclusive.
    end: i64,
    deductible: f64,
    limitation: u32,
    claims: Vec<(i64, Censoring)>,
}

/// Expands registers into the per-unit censored sample without materializing it.
///
/// Construction checks everything that can make the expansion ill-defined;
/// iteration is then infallible. Registers are read as of the reporting date:
/// claims reported after it are treated as not yet reported, and claims settled
/// after it as outstanding.
pub struct SampleBuilder {
    plans: Vec<PolicyPlan>,
    reporting_index: i64,
}

impl SampleBuilder {
    pub fn new(
        policies: &[PolicyRecord],
        claims: &[ClaimRecord],
        reporting_date: NaiveDate,
        config: &SampleConfig,
    ) -> Result<Self> {
        let unit = config.unit;
        let t = unit.index(reporting_date);
        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(policies.len());
        let mut plans = Vec::with_capacity(policies.len());
        for (i, p) in policies.iter().enumerate() {
            if by_id.insert(p.policy_id.as_str(), i).is_some() {
                return Err(Error::Sample(format!("duplicate policy_id `{}`", p.policy_id)));
            }
            if !unit.aligned(p.start_date) || !unit.aligned(p.end_date) {
                return Err(Error::Sample(format!(
                    "policy `{}`: the {unit:?} unit does not evenly cover {}..{}",
                    p.policy_id, p.start_date, p.end_date
                )));
            }
            let first = unit.index(p.start_date);
            let end = unit.index(p.end_date);
            if end <= first {
                return Err(Error::Sample(format!(
                    "policy `{}`: period {}..{} is shorter than one {unit:?} unit",
                    p.policy_id, p.start_date, p.end_date
                )));
            }
            if p.deductible < 0.0 {
                return Err(Error::Sample(format!("policy `{}`: negative deductible", p.policy_id)));
            }
            let days = p.limitation_days.unwrap_or(config.default_limitation_days);
            if days == 0 {
                return Err(Error::Sample(format!(
                    "policy `{}`: limitation period must be positive",
                    p.policy_id
                )));
            }
            plans.push(PolicyPlan {
                first,
                end: end.min(t + 1),
                deductible: p.deductible,
                limitation: unit.limitation_units(days),
                claims: Vec::new(),
            });
        }

        let mut owners: HashMap<(usize, i64), &str> = HashMap::new();
        for c in claims {
            let &pi = by_id.get(c.policy_id.as_str()).ok_or_else(|| {
                Error::Sample(format!(
                    "claim `{}` references unknown policy `{}`",
                    c.claim_id, c.policy_id
                ))
            })?;
            let plan = &mut plans[pi];
            let occ = unit.index(c.occurrence_date);
            if occ < plan.first || occ >= plan.end {
                return Err(Error::Sample(format!(
                    "claim `{}`: occurrence {} lies outside the observed units of policy `{}`",
                    c.claim_id, c.occurrence_date, c.policy_id
                )));
            }
            if c.report_date < c.occurrence_date {
                return Err(Error::Sample(format!(
                    "claim `{}`: reported before it occurred",
                    c.claim_id
                )));
            }
            if let Some(other) = owners.insert((pi, occ), c.claim_id.as_str()) {
                return Err(Error::DuplicateUnit {
                    policy_id: c.policy_id.clone(),
                    first: other.to_string(),
                    second: c.claim_id.clone(),
                });
            }
            let elapsed = (t - occ) as u32;
            let censoring = if c.report_date <= reporting_date {
                let delay = (unit.index(c.report_date) - occ) as u32;
                if delay > plan.limitation {
                    return Err(Error::Sample(format!(
                        "claim `{}`: reporting delay {delay} exceeds the limitation period {}",
                        c.claim_id, plan.limitation
                    )));
                }
                let settled = c.settled && c.settlement_date.is_none_or(|d| d <= reporting_date);
                if settled {
                    if c.paid_to_date < plan.deductible {
                        return Err(Error::Sample(format!(
                            "claim `{}`: settled amount {} is below the deductible {}",
                            c.claim_id, c.paid_to_date, plan.deductible
                        )));
                    }
                    Censoring::Settled {
                        amount: c.paid_to_date,
                        delay,
                    }
                } else {
                    Censoring::Outstanding {
                        paid: c.paid_to_date.max(0.0),
                        delay,
                    }
                }
            } else if elapsed >= plan.limitation {
                return Err(Error::Sample(format!(
                    "claim `{}`: reported after the limitation period expired",
                    c.claim_id
                )));
            } else {
                Censoring::NotReported
            };
            plan.claims.push((occ, censoring));
        }
        for plan in &mut plans {
            plan.claims.sort_by_key(|(u, _)| *u);
        }
        Ok(Self {
            plans,
            reporting_index: t,
        })
    }

    /// Sample size `n = Σ n_i`.
    pub fn len(&self) -> u64 {
        self.plans
            .iter()
            .map(|p| (p.end - p.first).max(0) as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observations in policy order, units ascending within a policy.
    pub fn observations(&self) -> impl Iterator<Item = CensoredObservation> + '_ {
        let t = self.reporting_index;
        self.plans.iter().flat_map(move |plan| {
            let mut claims = plan.claims.iter().peekable();
            (plan.first..plan.end).map(move |u| {
                let elapsed = (t - u) as u32;
                let censoring = match claims.peek() {
                    Some(&&(cu, c)) if cu == u => {
                        claims.next();
                        c
                    }
                    _ if elapsed >= plan.limitation => Censoring::ZeroClaim,
                    _ => Censoring::NotReported,
                };
                CensoredObservation {
                    censoring,
                    elapsed,
                    deductible: plan.deductible,
                    limitation: plan.limitation,
                }
            })
        })
    }
}

impl SampleBuilder {
    /// The same sample as [`observations`](Self::observations) with identical
    /// claim-free units merged: claim units come one by one, the remaining
    /// units as one counted row per elapsed time, deductible and limitation.
    /// Cost is proportional to policies and claims, not to exposure.
    pub fn counted_observations(&self) -> Vec<(CensoredObservation, u64)> {
        let t = self.reporting_index;
        let mut out = Vec::new();
        let mut classes: BTreeMap<(u64, u32), Vec<i64>> = BTreeMap::new();
        for plan in &self.plans {
            if plan.end <= plan.first {
                continue;
            }
            let lo = (t - (plan.end - 1)) as usize;
            let hi = (t - plan.first) as usize;
            let diff = classes
                .entry((plan.deductible.to_bits(), plan.limitation))
                .or_default();
            if diff.len() < hi + 2 {
                diff.resize(hi + 2, 0);
            }
            diff[lo] += 1;
            diff[hi + 1] -= 1;
            for &(u, censoring) in &plan.claims {
                let e = (t - u) as usize;
                diff[e] -= 1;
                diff[e + 1] += 1;
                out.push((
                    CensoredObservation {
                        censoring,
                        elapsed: e as u32,
                        deductible: plan.deductible,
                        limitation: plan.limitation,
                    },
                    1,
                ));
            }
        }
        for ((d, limitation), diff) in classes {
            let mut running = 0i64;
            for (e, step) in diff.iter().enumerate() {
                running += step;
                if running > 0 {
                    let elapsed = e as u32;
                    let censoring = if elapsed >= limitation {
                        Censoring::ZeroClaim
                    } else {
                        Censoring::NotReported
                    };
                    out.push((
                        CensoredObservation {
                            censoring,
                            elapsed,
                            deductible: f64::from_bits(d),
                            limitation,
                        },
                        running as u64,
                    ));
                }
            }
        }
        out
    }
}

/// Materializes the censored sample: one observation per policy per unit in
/// `[t¹, min(t², t)]`.
pub fn build_censored_sample(
    policies: &[PolicyRecord],
    claims: &[ClaimRecord],
    reporting_date: NaiveDate,
    config: &SampleConfig,
) -> Result<Vec<CensoredObservation>> {
    let builder = SampleBuilder::new(policies, claims, reporting_date, config)?;
    Ok(builder.observations().collect())
}

const SAMPLE_HEADER: [&str; 8] = [
    "delta",
    "zero_claim",
    "amount",
    "delay",
    "elapsed",
    "deductible",
    "limitation",
    "count",
];

type SampleRowKey = (u8, bool, u64, Option<u32>, u32, u64, u32);

fn row_key(o: &CensoredObservation) -> SampleRowKey {
    let delay = match o.delay() {
        DelayInfo::Exact(d) => Some(d),
        _ => None,
    };
    (
        o.status().code(),
        o.zero_claim(),
        o.amount().to_bits(),
        delay,
        o.elapsed,
        o.deductible.to_bits(),
        o.limitation,
    )
}

/// Writes a sample with identical observations merged into counted rows.
pub fn write_sample_csv<W: Write, I>(out: W, observations: I) -> Result<u64>
where
    I: IntoIterator<Item = CensoredObservation>,
{
    write_counted_sample_csv(out, observations.into_iter().map(|o| (o, 1)))
}

/// Like [`write_sample_csv`] for rows that already carry counts.
pub fn write_counted_sample_csv<W: Write, I>(out: W, rows: I) -> Result<u64>
where
    I: IntoIterator<Item = (CensoredObservation, u64)>,
{
    let mut merged: BTreeMap<SampleRowKey, (CensoredObservation, u64)> = BTreeMap::new();
    for (o, count) in rows {
        merged.entry(row_key(&o)).or_insert((o, 0)).1 += count;
    }
    let rows = merged;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLE_HEADER)?;
    let mut total = 0;
    for (o, count) in rows.values() {
        total += count;
        let delay = match o.delay() {
            DelayInfo::Exact(d) => d.to_string(),
            DelayInfo::After(_) => String::new(),
            DelayInfo::Infinite => "inf".into(),
        };
        w.write_record([
            o.status().code().to_string(),
            o.zero_claim().to_string(),
            o.amount().to_string(),
            delay,
            o.elapsed.to_string(),
            o.deductible.to_string(),
            o.limitation.to_string(),
            count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sample>", e))?;
    Ok(total)
}

/// Reads a sample written by [`write_sample_csv`] as `(observation, count)` rows.
pub fn read_sample_csv<R: Read>(input: R, file: &str) -> Result<Vec<(CensoredObservation, u64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |col: usize| -> Result<&str> {
            rec.get(col).map(str::trim).ok_or_else(|| Error::Parse {
                file: file.to_string(),
                row,
                column: SAMPLE_HEADER[col].to_string(),
                message: "missing field".into(),
            })
        };
        let bad = |col: usize, v: &str| Error::Parse {
            file: file.to_string(),
            row,
            column: SAMPLE_HEADER[col].to_string(),
            message: format!("invalid value `{v}`"),
        };
        macro_rules! num {
            ($col:expr, $t:ty) => {{
                let v = field($col)?;
                v.parse::<$t>().map_err(|_| bad($col, v))?
            }};
        }
        let delta = num!(0, u8);
        let zero = num!(1, bool);
        let amount = num!(2, f64);
        let elapsed = num!(4, u32);
        let deductible = num!(5, f64);
        let limitation = num!(6, u32);
        let count = num!(7, u64);
        let censoring = match (delta, zero) {
            (0, true) => Censoring::ZeroClaim,
            (0, false) => Censoring::Settled {
                amount,
                delay: num!(3, u32),
            },
            (1, false) => Censoring::Outstanding {
                paid: amount,
                delay: num!(3, u32),
            },
            (2, false) => Censoring::NotReported,
            _ => return Err(bad(0, field(0)?)),
        };
        out.push((
            CensoredObservation {
                censoring,
                elapsed,
                deductible,
                limitation,
            },
            count,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn policy(id: &str, start: &str, end: &str, deductible: f64, limit: Option<u32>) -> PolicyRecord {
        PolicyRecord {
            policy_id: id.into(),
            start_date: date(start),
            end_date: date(end),
            deductible,
            limitation_days: limit,
            row: 0,
        }
    }

    fn claim(id: &str, occ: &str, rep: &str, settle: Option<&str>, paid: f64, settled: bool) -> ClaimRecord {
        ClaimRecord {
            policy_id: "P1".into(),
            claim_id: id.into(),
            occurrence_date: date(occ),
            report_date: date(rep),
            settlement_date: settle.map(date),
            paid_to_date: paid,
            settled,
            row: 0,
        }
    }

    fn daily(limit_days: u32) -> SampleConfig {
        SampleConfig {
            unit: TimeUnit::Day,
            default_limitation_days: limit_days,
        }
    }

    #[test]
    fn expired_policy_without_claims_is_all_zero_points() {
        let p = [policy("P1", "2015-01-01", "2015-04-01", 0.0, None)];
        let s = build_censored_sample(&p, &[], date("2019-01-01"), &daily(365)).unwrap();
        assert_eq!(s.len(), 90);
        assert!(s.iter().all(|o| o.zero_claim()));
    }

    #[test]
    fn single_settled_claim_daily_unit() {
        // 365-day term, observed three years after it started, L = 365.
        let p = [policy("P1", "2015-01-01", "2016-01-01", 0.0, Some(365))];
        let c = [claim("C1", "2015-03-10", "2015-04-01", Some("2015-05-01"), 500.0, true)];
        let s = build_censored_sample(&p, &c, date("2018-01-01"), &daily(365)).unwrap();
        assert_eq!(s.len(), 365);
        assert_eq!(s.iter().filter(|o| o.zero_claim()).count(), 364);
        let exact: Vec<_> = s
            .iter()
            .filter(|o| matches!(o.censoring, Censoring::Settled { .. }))
            .collect();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].delay(), DelayInfo::Exact(22));
        assert_eq!(exact[0].amount(), 500.0);
    }

    #[test]
    fn reporting_date_caps_units_and_includes_its_own_day() {
        let p = [policy("P1", "2020-01-01", "2021-01-01", 0.0, None)];
        let s = build_censored_sample(&p, &[], date("2020-01-10"), &daily(1095)).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.last().unwrap().elapsed, 0);
        assert!(s.iter().all(|o| o.status() == Status::NotReported));
    }

    #[test]
    fn future_report_is_hidden_and_future_settlement_is_outstanding() {
        let p = [policy("P1", "2020-01-01", "2021-01-01", 0.0, None)];
        let c = [
            claim("C1", "2020-02-01", "2020-09-01", None, 0.0, false),
            claim("C2", "2020-03-01", "2020-03-05", Some("2020-08-01"), 70.0, true),
        ];
        let s = build_censored_sample(&p, &c, date("2020-06-01"), &daily(1095)).unwrap();
        let c1 = &s[31];
        assert_eq!(c1.status(), Status::NotReported);
        let c2 = &s[31 + 29];
        assert_eq!(c2.censoring, Censoring::Outstanding { paid: 70.0, delay: 4 });
    }

    #[test]
    fn two_claims_in_one_unit_is_an_error() {
        let p = [policy("P1", "2020-01-01", "2021-01-01", 0.0, None)];
        let c = [
            claim("C1", "2020-02-01", "2020-02-02", None, 1.0, false),
            claim("C2", "2020-02-01", "2020-02-03", None, 1.0, false),
        ];
        let err = build_censored_sample(&p, &c, date("2020-06-01"), &daily(1095)).unwrap_err();
        assert!(matches!(err, Error::DuplicateUnit { .. }));
    }

    #[test]
    fn month_unit_requires_aligned_periods() {
        let p = [policy("P1", "2020-01-15", "2021-01-01", 0.0, None)];
        let cfg = SampleConfig {
            unit: TimeUnit::Month,
            default_limitation_days: 730,
        };
        assert!(build_censored_sample(&p, &[], date("2021-06-01"), &cfg).is_err());
        let short = [policy("P1", "2020-01-01", "2020-01-01", 0.0, None)];
        assert!(build_censored_sample(&short, &[], date("2021-06-01"), &cfg).is_err());
    }

    #[test]
    fn report_before_occurrence_is_an_error() {
        let p = [policy("P1", "2020-01-01", "2021-01-01", 0.0, None)];
        let c = [claim("C1", "2020-02-01", "2020-01-20", None, 1.0, false)];
        assert!(build_censored_sample(&p, &c, date("2020-06-01"), &daily(1095)).is_err());
    }

    #[test]
    fn limitation_conversion_to_months() {
        assert_eq!(TimeUnit::Month.limitation_units(730), 24);
        assert_eq!(TimeUnit::Month.limitation_units(1095), 36);
        assert_eq!(TimeUnit::Day.limitation_units(1095), 1095);
    }

    #[test]
    fn sample_csv_round_trip_preserves_counts() {
        let p = [policy("P1", "2020-01-01", "2021-01-01", 5.0, Some(100))];
        let c = [
            claim("C1", "2020-02-01", "2020-02-03", Some("2020-02-04"), 12.5, true),
            claim("C2", "2020-05-01", "2020-05-09", None, 3.0, false),
        ];
        let s = build_censored_sample(&p, &c, date("2020-09-01"), &daily(100)).unwrap();
        let mut buf = Vec::new();
        let n = write_sample_csv(&mut buf, s.iter().copied()).unwrap();
        assert_eq!(n, s.len() as u64);
        let rows = read_sample_csv(buf.as_slice(), "sample.csv").unwrap();
        let mut expanded: Vec<CensoredObservation> = rows
            .iter()
            .flat_map(|(o, k)| std::iter::repeat_n(*o, *k as usize))
            .collect();
        let mut original = s.clone();
        let key = |o: &CensoredObservation| row_key(o);
        expanded.sort_by_key(key);
        original.sort_by_key(key);
        assert_eq!(expanded, original);
    }

    #[test]
    fn counted_observations_match_unit_iteration() {
        let p = [
            policy("P1", "2019-01-01", "2020-01-01", 0.0, Some(200)),
            policy("P2", "2019-06-01", "2020-06-01", 5.0, None),
            policy("P3", "2020-05-01", "2021-05-01", 0.0, Some(200)),
        ];
        let mut c = vec![
            claim("C1", "2019-02-01", "2019-02-03", Some("2019-02-04"), 12.5, true),
            claim("C2", "2019-12-01", "2020-07-09", None, 3.0, false),
        ];
        c[1].policy_id = "P2".into();
        let b = SampleBuilder::new(&p, &c, date("2020-09-01"), &daily(300)).unwrap();
        let mut a: BTreeMap<SampleRowKey, u64> = BTreeMap::new();
        for o in b.observations() {
            *a.entry(row_key(&o)).or_default() += 1;
        }
        let mut counted: BTreeMap<SampleRowKey, u64> = BTreeMap::new();
        for (o, k) in b.counted_observations() {
            *counted.entry(row_key(&o)).or_default() += k;
        }
        assert_eq!(a, counted);
        assert_eq!(counted.values().sum::<u64>(), b.len());
    }
}
