use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use super::interval::{tolerance_interval, QuantileMode};
use crate::data::{CensoredObservation, Censoring, Grid};
use crate::error::{Error, Result};
use crate::estimator::DistributionEstimate;
use crate::numeric::CompensatedSum;

/// Future reporting window `[start, end)` measured in time units after the
/// reporting date `t`. A unit not reported by `t` can be reported from `t + 1`
/// on, so the window covers reports made `start + 1 ..= end` units after `t`.
/// `end = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: u32,
    pub end: Option<u32>,
}

impl Window {
    pub fn new(start: u32, end: Option<u32>) -> Result<Self> {
        if end.is_some_and(|e| e <= start) {
            return Err(Error::InvalidInput(format!(
                "window end {end:?} must exceed its start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    /// Every future report.
    pub fn all() -> Self {
        Self { start: 0, end: None }
    }
}

/// Claim statistics of one unreported exposure unit for a window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WindowStats {
    /// Expected claim reported in the window, zero when none is.
    pub expected_claim: f64,
    pub variance: f64,
    /// Probability that a claim above the deductible is reported in the window.
    pub report_probability: f64,
}

/// Per-delay-cell moments of the claim part above a deductible.
struct Columns {
    /// Mass of each delay cell (all sizes).
    total: Vec<f64>,
    /// Mass above the deductible, and its first and second moments.
    above: Vec<[f64; 3]>,
    atom: f64,
}

impl Columns {
    fn new(estimate: &DistributionEstimate, deductible: f64) -> Self {
        let grid = estimate.grid();
        let nt = grid.n_tau();
        let mut total = vec![0.0; nt];
        let mut above = vec![[0.0; 3]; nt];
        for i in 0..grid.n_s() {
            let (share, value) = part_above(grid, i, deductible);
            for j in 0..nt {
                let m = estimate.mass_at(i, j);
                total[j] += m;
                if share > 0.0 {
                    let q = m * share;
                    above[j][0] += q;
                    above[j][1] += q * value;
                    above[j][2] += q * value * value;
                }
            }
        }
        Self {
            total,
            above,
            atom: estimate.atom_mass(),
        }
    }

    fn stats(&self, grid: &Grid, elapsed: u32, limitation: u32, window: Window) -> Result<WindowStats> {
        let e = elapsed as i64;
        let mut denom = CompensatedSum::new();
        denom.add(self.atom);
        for (j, &m) in self.total.iter().enumerate() {
            if m > 0.0 {
                denom.add(m * grid.tau_fraction(j, e, None));
            }
        }
        let denom = denom.value();
        if denom <= 0.0 {
            return Err(Error::NoConditionalMass { elapsed });
        }
        let after = e + window.start as i64;
        let up_to = window
            .end
            .map_or(limitation as i64, |w| (e + w as i64).min(limitation as i64));
        if up_to <= after {
            return Ok(WindowStats::default());
        }
        let mut acc = [CompensatedSum::new(); 3];
        for (j, moments) in self.above.iter().enumerate() {
            if moments[0] == 0.0 {
                continue;
            }
            let f = grid.tau_fraction(j, after, Some(up_to));
            if f > 0.0 {
                for k in 0..3 {
                    acc[k].add(moments[k] * f);
                }
            }
        }
        let p = acc[0].value() / denom;
        let m1 = acc[1].value() / denom;
        let m2 = acc[2].value() / denom;
        Ok(WindowStats {
            expected_claim: m1,
            variance: (m2 - m1 * m1).max(0.0),
            report_probability: p.clamp(0.0, 1.0),
        })
    }
}

/// Share of size cell `i` lying above `deductible` and the value representing
/// that part.
fn part_above(grid: &Grid, i: usize, deductible: f64) -> (f64, f64) {
    let (lo, hi) = grid.s_bounds(i);
    if deductible <= lo {
        (1.0, grid.s_representative(i))
    } else if hi.is_infinite() || deductible >= hi {
        (0.0, 0.0)
    } else {
        ((hi - deductible) / (hi - lo), 0.5 * (deductible + hi))
    }
}

/// Statistics of the claim an unreported observation will report in `window`.
pub fn window_stats(
    estimate: &DistributionEstimate,
    obs: &CensoredObservation,
    window: Window,
) -> Result<WindowStats> {
    if !matches!(obs.censoring, Censoring::NotReported) {
        return Err(Error::InvalidInput(
            "window statistics need an unreported observation".into(),
        ));
    }
    Columns::new(estimate, obs.deductible).stats(estimate.grid(), obs.elapsed, obs.limitation, window)
}

/// Unreported exposure units sharing elapsed time, deductible and limitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnreportedGroup {
    pub elapsed: u32,
    pub deductible: f64,
    pub limitation: u32,
    pub count: u64,
}

/// Reported, unsettled claims sharing paid amount and delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutstandingGroup {
    pub paid: f64,
    pub delay: u32,
    pub count: u64,
}

/// Compressed view of a censored sample with what the reserve calculations
/// need: exposure, amounts paid, and the unreported and outstanding units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExposureProfile {
    exposure: u64,
    settled: u64,
    zero: u64,
    paid: CompensatedSum,
    // Deductibles are nonnegative, so their bit patterns order like the values.
    unreported: BTreeMap<(u32, u64, u32), u64>,
    outstanding: BTreeMap<(u64, u32), u64>,
}

impl ExposureProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_observations<I>(observations: I) -> Self
    where
        I: IntoIterator<Item = CensoredObservation>,
    {
        let mut p = Self::new();
        for obs in observations {
            p.add(&obs, 1);
        }
        p
    }

    pub fn add(&mut self, obs: &CensoredObservation, count: u64) {
        if count == 0 {
            return;
        }
        self.exposure += count;
        match obs.censoring {
            Censoring::Settled { amount, .. } => {
                self.settled += count;
                self.paid.add(amount * count as f64);
            }
            Censoring::Outstanding { paid, delay } => {
                self.paid.add(paid * count as f64);
                *self.outstanding.entry((paid.to_bits(), delay)).or_default() += count;
            }
            Censoring::NotReported => {
                let key = (obs.elapsed, obs.deductible.to_bits(), obs.limitation);
                *self.unreported.entry(key).or_default() += count;
            }
            Censoring::ZeroClaim => self.zero += count,
        }
    }

    pub fn merge(&mut self, other: &ExposureProfile) {
        self.exposure += other.exposure;
        self.settled += other.settled;
        self.zero += other.zero;
        self.paid.add(other.paid.value());
        for (k, c) in &other.unreported {
            *self.unreported.entry(*k).or_default() += c;
        }
        for (k, c) in &other.outstanding {
            *self.outstanding.entry(*k).or_default() += c;
        }
    }

    /// Number of exposure units.
    pub fn exposure(&self) -> u64 {
        self.exposure
    }

    /// Total paid on reported claims.
    pub fn paid_total(&self) -> f64 {
        self.paid.value()
    }

    pub fn settled_count(&self) -> u64 {
        self.settled
    }

    pub fn zero_count(&self) -> u64 {
        self.zero
    }

    pub fn unreported_count(&self) -> u64 {
        self.unreported.values().sum()
    }

    pub fn outstanding_count(&self) -> u64 {
        self.outstanding.values().sum()
    }

    pub fn unreported(&self) -> impl Iterator<Item = UnreportedGroup> + '_ {
        self.unreported.iter().map(|(&(elapsed, d, limitation), &count)| UnreportedGroup {
            elapsed,
            deductible: f64::from_bits(d),
            limitation,
            count,
        })
    }

    pub fn outstanding(&self) -> impl Iterator<Item = OutstandingGroup> + '_ {
        self.outstanding.iter().map(|(&(paid, delay), &count)| OutstandingGroup {
            paid: f64::from_bits(paid),
            delay,
            count,
        })
    }
}

/// Portfolio totals for one window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IbnrStats {
    pub mean: f64,
    /// Sum of per-unit variances (units treated as independent).
    pub variance: f64,
    pub expected_count: f64,
}

/// Sums [`window_stats`] over every unreported unit of the profile.
pub fn portfolio_ibnr(
    estimate: &DistributionEstimate,
    profile: &ExposureProfile,
    window: Window,
) -> Result<IbnrStats> {
    let mut columns: HashMap<u64, Columns> = HashMap::new();
    let mut acc = [CompensatedSum::new(); 3];
    for g in profile.unreported() {
        let cols = columns
            .entry(g.deductible.to_bits())
            .or_insert_with(|| Columns::new(estimate, g.deductible));
        let s = cols.stats(estimate.grid(), g.elapsed, g.limitation, window)?;
        let n = g.count as f64;
        acc[0].add(s.expected_claim * n);
        acc[1].add(s.variance * n);
        acc[2].add(s.report_probability * n);
    }
    Ok(IbnrStats {
        mean: acc[0].value(),
        variance: acc[1].value(),
        expected_count: acc[2].value(),
    })
}

/// One row of the IBNR schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub window: Window,
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
    pub sd: f64,
    pub expected_count: f64,
}

/// Splits the IBNR over consecutive windows `[e_0, e_1), [e_1, e_2), …`.
/// The edges must start at 0 and ascend; when the last edge is finite a final
/// open-ended row is appended so that the rows cover every future report.
pub fn ibnr_schedule(
    estimate: &DistributionEstimate,
    profile: &ExposureProfile,
    edges: &[u32],
    p: f64,
    mode: QuantileMode,
) -> Result<Vec<ScheduleRow>> {
    if edges.first() != Some(&0) {
        return Err(Error::InvalidInput("schedule edges must start at 0".into()));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("schedule edges must be strictly ascending".into()));
    }
    let mut windows: Vec<Window> = edges
        .windows(2)
        .map(|w| Window {
            start: w[0],
            end: Some(w[1]),
        })
        .collect();
    windows.push(Window {
        start: *edges.last().unwrap(),
        end: None,
    });
    windows
        .into_par_iter()
        .map(|window| {
            let s = portfolio_ibnr(estimate, profile, window)?;
            let (lower, upper) = tolerance_interval(s.mean, s.variance, p, mode)?;
            Ok(ScheduleRow {
                window,
                lower,
                mean: s.mean,
                upper,
                sd: s.variance.sqrt(),
                expected_count: s.expected_count,
            })
        })
        .collect()
}
