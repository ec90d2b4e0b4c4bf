use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::sample::{Censoring, CensoredObservation};
use crate::error::{Error, Result};

/// Canonical censoring pattern of an observation on a grid.
///
/// Observations with equal keys have identical censoring sets, so the EM
/// iteration only needs one conditional distribution per key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternKey {
    /// The `(0, ∞)` point.
    ZeroClaim,
    /// Exact point in cell `(s_bin, tau_bin)`.
    Settled { s_bin: u32, tau_bin: u32 },
    /// Half-line `s ≥ paid` within delay cell `tau_bin`.
    Outstanding { s_bin: u32, tau_bin: u32 },
    /// `{s ≤ d, τ ≤ L} ∪ {s > d, t_k < τ ≤ L} ∪ {(0, ∞)}`, encoded by the number
    /// of size cells below the deductible, the first delay cell that can still
    /// hold a report (the one containing `t_k + 1`), and the cell containing `L`.
    NotReported {
        deductible_split: u32,
        first_open_tau_bin: u32,
        limit_bin: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternClass {
    ZeroClaim,
    Settled,
    Outstanding,
    NotReported,
}

/// Axis-aligned block of grid cells: size cells `s` × delay cells `tau`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rect {
    pub s: Range<usize>,
    pub tau: Range<usize>,
}

impl Rect {
    pub fn is_empty(&self) -> bool {
        self.s.is_empty() || self.tau.is_empty()
    }

    pub fn contains(&self, s_cell: usize, tau_cell: usize) -> bool {
        self.s.contains(&s_cell) && self.tau.contains(&tau_cell)
    }
}

/// Censoring set as a union of disjoint rectangles plus, optionally, the atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensoringSet {
    pub rects: Vec<Rect>,
    pub atom: bool,
}

impl CensoringSet {
    pub fn is_empty(&self) -> bool {
        !self.atom && self.rects.iter().all(Rect::is_empty)
    }

    /// Number of grid cells in the set.
    pub fn size(&self) -> usize {
        self.rects.iter().map(|r| r.s.len() * r.tau.len()).sum::<usize>() + self.atom as usize
    }

    pub fn contains(&self, grid: &Grid, cell: usize) -> bool {
        if cell == grid.atom() {
            return self.atom;
        }
        let (i, j) = (cell / grid.n_tau(), cell % grid.n_tau());
        self.rects.iter().any(|r| r.contains(i, j))
    }

    /// Indices of all member cells, ascending.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.n_cells()).filter(|&c| self.contains(grid, c)).collect()
    }
}

impl PatternKey {
    pub fn from_observation(obs: &CensoredObservation, grid: &Grid) -> Result<Self> {
        Ok(match obs.censoring {
            Censoring::ZeroClaim => PatternKey::ZeroClaim,
            Censoring::Settled { amount, delay } => PatternKey::Settled {
                s_bin: grid.s_bin(amount)? as u32,
                tau_bin: grid.tau_bin(delay)? as u32,
            },
            Censoring::Outstanding { paid, delay } => PatternKey::Outstanding {
                s_bin: grid.s_bin(paid)? as u32,
                tau_bin: grid.tau_bin(delay)? as u32,
            },
            Censoring::NotReported => {
                if obs.elapsed >= obs.limitation {
                    return Err(Error::EmptyCensoringSet(format!(
                        "unreported observation with elapsed {} ≥ limitation {}",
                        obs.elapsed, obs.limitation
                    )));
                }
                PatternKey::NotReported {
                    deductible_split: grid.deductible_split(obs.deductible) as u32,
                    first_open_tau_bin: grid.tau_bin(obs.elapsed + 1)? as u32,
                    limit_bin: grid.tau_bin(obs.limitation)? as u32,
                }
            }
        })
    }

    pub fn class(&self) -> PatternClass {
        match self {
            PatternKey::ZeroClaim => PatternClass::ZeroClaim,
            PatternKey::Settled { .. } => PatternClass::Settled,
            PatternKey::Outstanding { .. } => PatternClass::Outstanding,
            PatternKey::NotReported { .. } => PatternClass::NotReported,
        }
    }

    /// Checks that the key addresses valid cells of `grid` and has a nonempty set.
    pub fn check(&self, grid: &Grid) -> Result<()> {
        let (ns, nt) = (grid.n_s() as u32, grid.n_tau() as u32);
        let ok = match *self {
            PatternKey::ZeroClaim => true,
            PatternKey::Settled { s_bin, tau_bin } | PatternKey::Outstanding { s_bin, tau_bin } => {
                s_bin < ns && tau_bin < nt
            }
            PatternKey::NotReported {
                deductible_split,
                first_open_tau_bin,
                limit_bin,
            } => deductible_split <= ns && first_open_tau_bin <= limit_bin && limit_bin < nt,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::EmptyCensoringSet(format!("{self:?} does not fit the grid")))
        }
    }

    pub fn censoring_set(&self, grid: &Grid) -> CensoringSet {
        let ns = grid.n_s();
        match *self {
            PatternKey::ZeroClaim => CensoringSet {
                rects: vec![],
                atom: true,
            },
            PatternKey::Settled { s_bin, tau_bin } => {
                let (i, j) = (s_bin as usize, tau_bin as usize);
                CensoringSet {
                    rects: vec![Rect {
                        s: i..i + 1,
                        tau: j..j + 1,
                    }],
                    atom: false,
                }
            }
            PatternKey::Outstanding { s_bin, tau_bin } => {
                let j = tau_bin as usize;
                CensoringSet {
                    rects: vec![Rect {
                        s: s_bin as usize..ns,
                        tau: j..j + 1,
                    }],
                    atom: false,
                }
            }
            PatternKey::NotReported {
                deductible_split,
                first_open_tau_bin,
                limit_bin,
            } => {
                let split = deductible_split as usize;
                let limit = limit_bin as usize + 1;
                let rects = [
                    Rect {
                        s: 0..split,
                        tau: 0..limit,
                    },
                    Rect {
                        s: split..ns,
                        tau: first_open_tau_bin as usize..limit,
                    },
                ]
                .into_iter()
                .filter(|r| !r.is_empty())
                .collect();
                CensoringSet { rects, atom: true }
            }
        }
    }
}

/// Counts of observations per censoring pattern on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    grid: Grid,
    patterns: BTreeMap<PatternKey, u64>,
    n: u64,
}

impl GroupedSample {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            patterns: BTreeMap::new(),
            n: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn patterns(&self) -> &BTreeMap<PatternKey, u64> {
        &self.patterns
    }

    /// Total number of observations `n`.
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn insert(&mut self, key: PatternKey, count: u64) -> Result<()> {
        key.check(&self.grid)?;
        if count > 0 {
            *self.patterns.entry(key).or_insert(0) += count;
            self.n += count;
        }
        Ok(())
    }

    pub fn add(&mut self, obs: &CensoredObservation) -> Result<()> {
        let key = PatternKey::from_observation(obs, &self.grid)?;
        self.insert(key, 1)
    }

    pub fn merge(&mut self, other: &GroupedSample) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::Grid("cannot merge samples grouped on different grids".into()));
        }
        for (k, c) in &other.patterns {
            *self.patterns.entry(*k).or_insert(0) += c;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn class_count(&self, class: PatternClass) -> u64 {
        self.patterns
            .iter()
            .filter(|(k, _)| k.class() == class)
            .map(|(_, c)| c)
            .sum()
    }

    /// Writes rows `s_bin,delta,tau_bin,count,limit_bin`.
    ///
    /// Zero claims are `zero,0,inf`; settled/outstanding rows carry their cell;
    /// unreported rows carry the deductible split in `s_bin`, the first open
    /// delay cell in `tau_bin` and the limitation cell in `limit_bin`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s_bin", "delta", "tau_bin", "count", "limit_bin"])?;
        for (key, count) in &self.patterns {
            let row: [String; 5] = match *key {
                PatternKey::ZeroClaim => {
                    ["zero".into(), "0".into(), "inf".into(), count.to_string(), String::new()]
                }
                PatternKey::Settled { s_bin, tau_bin } => [
                    s_bin.to_string(),
                    "0".into(),
                    tau_bin.to_string(),
                    count.to_string(),
                    String::new(),
                ],
                PatternKey::Outstanding { s_bin, tau_bin } => [
                    s_bin.to_string(),
                    "1".into(),
                    tau_bin.to_string(),
                    count.to_string(),
                    String::new(),
                ],
                PatternKey::NotReported {
                    deductible_split,
                    first_open_tau_bin,
                    limit_bin,
                } => [
                    deductible_split.to_string(),
                    "2".into(),
                    first_open_tau_bin.to_string(),
                    count.to_string(),
                    limit_bin.to_string(),
                ],
            };
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<grouped sample>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, grid: Grid, file: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = GroupedSample::new(grid);
        const COLS: [&str; 5] = ["s_bin", "delta", "tau_bin", "count", "limit_bin"];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let field = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
            let num = |c: usize| -> Result<u32> {
                field(c).parse::<u32>().map_err(|_| Error::Parse {
                    file: file.to_string(),
                    row,
                    column: COLS[c].to_string(),
                    message: format!("invalid value `{}`", field(c)),
                })
            };
            let count: u64 = field(3).parse().map_err(|_| Error::Parse {
                file: file.to_string(),
                row,
                column: "count".into(),
                message: format!("invalid count `{}`", field(3)),
            })?;
            let key = match field(1) {
                "0" if field(0) == "zero" => PatternKey::ZeroClaim,
                "0" => PatternKey::Settled {
                    s_bin: num(0)?,
                    tau_bin: num(2)?,
                },
                "1" => PatternKey::Outstanding {
                    s_bin: num(0)?,
                    tau_bin: num(2)?,
                },
                "2" => PatternKey::NotReported {
                    deductible_split: num(0)?,
                    first_open_tau_bin: num(2)?,
                    limit_bin: num(4)?,
                },
                other => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        row,
                        column: "delta".into(),
                        message: format!("invalid status `{other}`"),
                    })
                }
            };
            out.insert(key, count)?;
        }
        Ok(out)
    }
}

/// Groups a materialized sample. Large samples are split across threads and
/// merged; the result does not depend on the split.
pub fn group(sample: &[CensoredObservation], grid: &Grid) -> Result<GroupedSample> {
    const CHUNK: usize = 1 << 16;
    if sample.len() <= CHUNK {
        return group_iter(sample.iter().copied(), grid);
    }
    let parts: Vec<GroupedSample> = sample
        .par_chunks(CHUNK)
        .map(|chunk| group_iter(chunk.iter().copied(), grid))
        .collect::<Result<_>>()?;
    let mut out = GroupedSample::new(grid.clone());
    for p in &parts {
        out.merge(p)?;
    }
    Ok(out)
}

/// Groups a stream of observations.
pub fn group_iter<I>(observations: I, grid: &Grid) -> Result<GroupedSample>
where
    I: IntoIterator<Item = CensoredObservation>,
{
    let mut out = GroupedSample::new(grid.clone());
    for obs in observations {
        out.add(&obs)?;
    }
    Ok(out)
}

/// Groups `(observation, count)` rows such as those of
/// [`SampleBuilder::counted_observations`](super::SampleBuilder::counted_observations).
pub fn group_counted<I>(rows: I, grid: &Grid) -> Result<GroupedSample>
where
    I: IntoIterator<Item = (CensoredObservation, u64)>,
{
    let mut out = GroupedSample::new(grid.clone());
    for (obs, count) in rows {
        if count > 0 {
            out.insert(PatternKey::from_observation(&obs, grid)?, count)?;
        }
    }
    Ok(out)
}
