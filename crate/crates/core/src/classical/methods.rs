use serde::Serialize;

use super::triangle::Triangle;
use crate::error::{Error, Result};

/// Tail factor applied beyond the last observed development age.
const TAIL_FACTOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainLadder {
    /// Age-to-age factors, one per pair of adjacent ages.
    pub factors: Vec<f64>,
    pub tail: f64,
    /// Triangle filled out to the last age (rows stay cumulative).
    pub completed: Vec<Vec<f64>>,
    pub ultimates: Vec<f64>,
    pub latest: Vec<f64>,
    pub reserve: f64,
}

impl ChainLadder {
    /// Factors followed by the tail factor, as printed under a triangle.
    pub fn factor_row(&self) -> Vec<f64> {
        let mut row = self.factors.clone();
        row.push(self.tail);
        row
    }

    /// Cumulative development factor from the latest age of each origin to ultimate.
    pub fn to_ultimate(&self, triangle: &Triangle) -> Vec<f64> {
        triangle
            .rows()
            .iter()
            .map(|r| {
                let from = r.len().saturating_sub(1);
                self.factors[from.min(self.factors.len())..].iter().product::<f64>() * self.tail
            })
            .collect()
    }
}

/// Volume-weighted chain ladder: `f_j = Σ C[i][j+1] / Σ C[i][j]` over origins
/// observed at both ages.
pub fn chain_ladder(triangle: &Triangle) -> Result<ChainLadder> {
    let n = triangle.n_ages();
    if n < 2 {
        return Err(Error::Triangle("chain ladder needs at least two development ages".into()));
    }
    let rows = triangle.rows();
    let mut factors = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let (mut num, mut den) = (0.0, 0.0);
        let mut pairs = 0;
        for r in rows.iter().filter(|r| r.len() > j + 1) {
            num += r[j + 1];
            den += r[j];
            pairs += 1;
        }
        if pairs == 0 || den == 0.0 {
            return Err(Error::Triangle(format!(
                "development age `{}` has a zero column sum",
                triangle.ages()[j]
            )));
        }
        factors.push(num / den);
    }
    let mut completed = Vec::with_capacity(rows.len());
    let mut ultimates = Vec::with_capacity(rows.len());
    for r in rows {
        let mut full = r.clone();
        if full.is_empty() {
            full.push(0.0);
        }
        while full.len() < n {
            let last = *full.last().unwrap();
            full.push(last * factors[full.len() - 1]);
        }
        ultimates.push(full[n - 1] * TAIL_FACTOR);
        completed.push(full);
    }
    let latest = triangle.latest();
    let reserve = ultimates.iter().zip(&latest).map(|(u, l)| u - l).sum();
    Ok(ChainLadder {
        factors,
        tail: TAIL_FACTOR,
        completed,
        ultimates,
        latest,
        reserve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BornhuetterFerguson {
    pub reserves: Vec<f64>,
    pub reserve: f64,
}

/// Reserve of each origin as the a-priori ultimate times the share still
/// undeveloped under the chain-ladder pattern.
pub fn bornhuetter_ferguson(triangle: &Triangle, a_priori: &[f64]) -> Result<BornhuetterFerguson> {
    if a_priori.len() != triangle.rows().len() {
        return Err(Error::Triangle(format!(
            "{} a-priori ultimates for {} origins",
            a_priori.len(),
            triangle.rows().len()
        )));
    }
    let cl = chain_ladder(triangle)?;
    let reserves: Vec<f64> = cl
        .to_ultimate(triangle)
        .iter()
        .zip(a_priori)
        .map(|(cdf, a)| a * (1.0 - 1.0 / cdf))
        .collect();
    Ok(BornhuetterFerguson {
        reserve: reserves.iter().sum(),
        reserves,
    })
}

/// Chain-ladder ultimate claim count times the average severity, less the
/// amount already paid.
pub fn frequency_severity(counts: &Triangle, average_severity: f64, paid_to_date: f64) -> Result<f64> {
    let cl = chain_ladder(counts)?;
    Ok(cl.ultimates.iter().sum::<f64>() * average_severity - paid_to_date)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReasonableRange {
    pub min: f64,
    pub max: f64,
    pub midpoint: f64,
}

impl ReasonableRange {
    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }
}

/// Span of a set of reserve estimates; `None` when there are none.
pub fn reasonable_range(reserves: &[f64]) -> Option<ReasonableRange> {
    let min = reserves.iter().copied().reduce(f64::min)?;
    let max = reserves.iter().copied().reduce(f64::max)?;
    Some(ReasonableRange {
        min,
        max,
        midpoint: 0.5 * (min + max),
    })
}
