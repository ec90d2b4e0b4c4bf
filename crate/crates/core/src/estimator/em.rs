//! Self-consistency (EM) iteration for the quasi-empirical estimate.
//!
//! One step replaces the current masses `P` by
//!
//! ```text
//! P'(B) = (1/n) Σ_k count_k · P(B ∩ C_k) / P(C_k)
//! ```
//!
//! summed over grouped censoring patterns `C_k`. Point patterns contribute
//! their count directly; half-line columns are accumulated cell by cell; the
//! unreported-claim rectangles are accumulated through a 2-D difference array,
//! so a step costs `O(#patterns · n_s + #cells)`.

use serde::{Deserialize, Serialize};

use super::estimate::DistributionEstimate;
use crate::data::{Grid, GroupedSample, PatternKey};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Uniform,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once the sup-norm change of the CDF drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: Init,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
            init: Init::Uniform,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one EM update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Grouped log-likelihood `Σ count · ln P(C_k)` of the estimate the step started from.
    pub log_likelihood: f64,
    /// Sup-norm CDF change produced by the step.
    pub delta: f64,
    /// Patterns whose censoring set had zero mass and were reseeded uniformly.
    pub reseeded: usize,
}

/// Grouped sample compiled into flat per-kind tables.
struct Compiled {
    grid: Grid,
    n: f64,
    zero_count: f64,
    /// `(cell, count)`
    points: Vec<(usize, f64)>,
    /// `(first size cell, delay cell, count)`
    columns: Vec<(usize, usize, f64)>,
    /// `(deductible split, first open delay cell, limit cell, count)`
    unreported: Vec<(usize, usize, usize, f64)>,
}

impl Compiled {
    fn new(grouped: &GroupedSample) -> Result<Self> {
        if grouped.is_empty() {
            return Err(Error::InvalidInput("grouped sample is empty".into()));
        }
        let grid = grouped.grid().clone();
        let mut c = Compiled {
            n: grouped.len() as f64,
            zero_count: 0.0,
            points: Vec::new(),
            columns: Vec::new(),
            unreported: Vec::new(),
            grid,
        };
        for (key, &count) in grouped.patterns() {
            let count = count as f64;
            match *key {
                PatternKey::ZeroClaim => c.zero_count += count,
                PatternKey::Settled { s_bin, tau_bin } => {
                    c.points.push((c.grid.cell(s_bin as usize, tau_bin as usize), count))
                }
                PatternKey::Outstanding { s_bin, tau_bin } => {
                    c.columns.push((s_bin as usize, tau_bin as usize, count))
                }
                PatternKey::NotReported {
                    deductible_split,
                    first_open_tau_bin,
                    limit_bin,
                } => c.unreported.push((
                    deductible_split as usize,
                    first_open_tau_bin as usize,
                    limit_bin as usize,
                    count,
                )),
            }
        }
        Ok(c)
    }

    /// One update from `mass`; returns the new masses, the log-likelihood of
    /// `mass` and the number of reseeded patterns.
    fn step(&self, mass: &[f64]) -> (Vec<f64>, f64, usize) {
        let g = &self.grid;
        let (ns, nt) = (g.n_s(), g.n_tau());
        let atom = g.atom();
        let w = nt + 1;

        // prefix[i * w + j]: mass of size rows < i and delay cells < j.
        let mut prefix = vec![0.0; (ns + 1) * w];
        for i in 0..ns {
            let mut row = 0.0;
            for j in 0..nt {
                row += mass[i * nt + j];
                prefix[(i + 1) * w + j + 1] = prefix[i * w + j + 1] + row;
            }
        }
        let rect = |i0: usize, i1: usize, j0: usize, j1: usize| -> f64 {
            if i0 >= i1 || j0 >= j1 {
                return 0.0;
            }
            let v = prefix[i1 * w + j1] - prefix[i0 * w + j1] - prefix[i1 * w + j0]
                + prefix[i0 * w + j0];
            v.max(0.0)
        };

        let mut loglik = CompensatedSum::new();
        let mut reseeded = 0;
        let mut direct = vec![0.0; mass.len()];
        let mut weight = vec![0.0; mass.len()];
        let mut diff = vec![0.0; (ns + 1) * w];
        let mut atom_weight = 0.0;

        if self.zero_count > 0.0 {
            loglik.add(self.zero_count * mass[atom].ln());
            direct[atom] += self.zero_count;
        }

        for &(cell, count) in &self.points {
            loglik.add(count * mass[cell].ln());
            direct[cell] += count;
        }

        for &(s0, j, count) in &self.columns {
            let total: f64 = (s0..ns).map(|i| mass[i * nt + j]).sum();
            loglik.add(count * total.ln());
            if total > 0.0 {
                let wk = count / total;
                for i in s0..ns {
                    weight[i * nt + j] += wk;
                }
            } else {
                reseeded += 1;
                let share = count / (ns - s0) as f64;
                for i in s0..ns {
                    direct[i * nt + j] += share;
                }
            }
        }

        for &(split, open, limit, count) in &self.unreported {
            let end = limit + 1;
            let total = rect(0, split, 0, end) + rect(split, ns, open, end) + mass[atom];
            loglik.add(count * total.ln());
            if total > 0.0 {
                let wk = count / total;
                let mut add = |i0: usize, i1: usize, j0: usize, j1: usize| {
                    if i0 < i1 && j0 < j1 {
                        diff[i0 * w + j0] += wk;
                        diff[i0 * w + j1] -= wk;
                        diff[i1 * w + j0] -= wk;
                        diff[i1 * w + j1] += wk;
                    }
                };
                add(0, split, 0, end);
                add(split, ns, open, end);
                atom_weight += wk;
            } else {
                reseeded += 1;
                let size = split * end + (ns - split) * (end - open) + 1;
                let share = count / size as f64;
                for i in 0..ns {
                    let from = if i < split { 0 } else { open };
                    for j in from..end {
                        direct[i * nt + j] += share;
                    }
                }
                direct[atom] += share;
            }
        }

        // Resolve the difference array into per-cell weights.
        for i in 0..ns {
            for j in 0..nt {
                let above = if i > 0 { diff[(i - 1) * w + j] } else { 0.0 };
                let left = if j > 0 { diff[i * w + j - 1] } else { 0.0 };
                let corner = if i > 0 && j > 0 { diff[(i - 1) * w + j - 1] } else { 0.0 };
                diff[i * w + j] += above + left - corner;
                weight[i * nt + j] += diff[i * w + j];
            }
        }
        weight[atom] += atom_weight;

        let mut next: Vec<f64> = mass
            .iter()
            .zip(&weight)
            .zip(&direct)
            .map(|((&m, &wt), &d)| (d + m * wt) / self.n)
            .collect();
        let total = next.iter().copied().collect::<CompensatedSum>().value();
        if total > 0.0 {
            for m in &mut next {
                *m /= total;
            }
        }
        (next, loglik.value(), reseeded)
    }
}

/// Sup-norm distance between the CDFs of two mass vectors on `grid`,
/// evaluated at every cell corner and on the `τ = ∞` column.
pub fn cdf_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let (ns, nt) = (grid.n_s(), grid.n_tau());
    let mut col = vec![0.0; nt];
    let atom_diff = a[grid.atom()] - b[grid.atom()];
    let mut sup = atom_diff.abs();
    let mut rows_total = 0.0;
    for i in 0..ns {
        let mut row = 0.0;
        for j in 0..nt {
            let c = grid.cell(i, j);
            row += a[c] - b[c];
            col[j] += row;
            sup = sup.max(col[j].abs());
        }
        rows_total += row;
        sup = sup.max((rows_total + atom_diff).abs());
    }
    sup
}

/// Restriction of the estimate to the pattern's censoring set, renormalized:
/// `P(B | C_k)` for every grid cell `B`. A set with zero mass gets the uniform
/// distribution over its cells.
pub fn conditional_mass(estimate: &DistributionEstimate, pattern: &PatternKey) -> Result<Vec<f64>> {
    let grid = estimate.grid();
    pattern.check(grid)?;
    let set = pattern.censoring_set(grid);
    if set.is_empty() {
        return Err(Error::EmptyCensoringSet(format!("{pattern:?}")));
    }
    let cells = set.cells(grid);
    let mass = estimate.mass();
    let total: f64 = cells.iter().map(|&c| mass[c]).collect::<CompensatedSum>().value();
    let mut out = vec![0.0; grid.n_cells()];
    for &c in &cells {
        out[c] = if total > 0.0 {
            mass[c] / total
        } else {
            1.0 / cells.len() as f64
        };
    }
    Ok(out)
}

/// Grouped log-likelihood `Σ count · ln P(C_k)` of an estimate.
pub fn log_likelihood(estimate: &DistributionEstimate, grouped: &GroupedSample) -> Result<f64> {
    check_grid(estimate, grouped)?;
    let compiled = Compiled::new(grouped)?;
    Ok(compiled.step(estimate.mass()).1)
}

fn check_grid(estimate: &DistributionEstimate, grouped: &GroupedSample) -> Result<()> {
    if estimate.grid() != grouped.grid() {
        return Err(Error::Grid("estimate and sample use different grids".into()));
    }
    Ok(())
}

/// One self-consistency update of `estimate` against `grouped`.
pub fn em_step(estimate: &DistributionEstimate, grouped: &GroupedSample) -> Result<DistributionEstimate> {
    check_grid(estimate, grouped)?;
    let compiled = Compiled::new(grouped)?;
    let (next, _, _) = compiled.step(estimate.mass());
    let mut out = DistributionEstimate::from_parts(grouped.grid().clone(), next);
    out.iterations = estimate.iterations + 1;
    out.final_delta = cdf_distance(grouped.grid(), out.mass(), estimate.mass());
    Ok(out)
}

/// Fits the qED estimate: iterates [`em_step`] from the configured start until
/// the sup-norm CDF change drops below the tolerance or the iteration budget is
/// spent. A fit that runs out of iterations is returned with `converged = false`.
pub fn fit(grouped: &GroupedSample, config: &FitConfig) -> Result<DistributionEstimate> {
    fit_traced(grouped, config).map(|(e, _)| e)
}

/// [`fit`] plus the per-iteration log.
pub fn fit_traced(
    grouped: &GroupedSample,
    config: &FitConfig,
) -> Result<(DistributionEstimate, Vec<IterationRecord>)> {
    config.validate()?;
    let compiled = Compiled::new(grouped)?;
    let grid = grouped.grid();
    let mut mass = match &config.init {
        Init::Uniform => DistributionEstimate::uniform(grid.clone()).mass().to_vec(),
        Init::Custom(m) => DistributionEstimate::from_mass(grid.clone(), m.clone())?
            .mass()
            .to_vec(),
    };
    let mut trace = Vec::new();
    let mut delta = f64::INFINITY;
    let mut converged = false;
    for iteration in 1..=config.max_iterations {
        let (next, loglik, reseeded) = compiled.step(&mass);
        delta = cdf_distance(grid, &next, &mass);
        mass = next;
        trace.push(IterationRecord {
            iteration,
            log_likelihood: loglik,
            delta,
            reseeded,
        });
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }
    let mut est = DistributionEstimate::from_parts(grid.clone(), mass);
    est.iterations = trace.len();
    est.final_delta = delta;
    est.converged = converged;
    Ok((est, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatternKey as K;

    fn grid_1d(s_edges: Vec<f64>) -> Grid {
        Grid::new(s_edges, vec![0, 1]).unwrap()
    }

    /// Reference step straight from the definition, via `conditional_mass`.
    fn reference_step(est: &DistributionEstimate, grouped: &GroupedSample) -> Vec<f64> {
        let mut acc = vec![0.0; est.grid().n_cells()];
        for (k, &c) in grouped.patterns() {
            let cm = conditional_mass(est, k).unwrap();
            for (a, m) in acc.iter_mut().zip(cm) {
                *a += c as f64 * m;
            }
        }
        acc.iter().map(|a| a / grouped.len() as f64).collect()
    }

    #[test]
    fn point_pattern_conditional_is_unit_mass() {
        let g = Grid::new(vec![0.0, 10e3, 39e3, 95e3], Grid::uniform_tau_edges(1, 24)).unwrap();
        let est = DistributionEstimate::uniform(g.clone());
        let key = K::Settled { s_bin: 3, tau_bin: 4 };
        let cm = conditional_mass(&est, &key).unwrap();
        assert_eq!(cm[g.cell(3, 4)], 1.0);
        assert_eq!(cm.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn outstanding_conditional_is_uniform_over_qualifying_cells() {
        let g = Grid::new(vec![0.0, 1.0], vec![0, 1, 2]).unwrap();
        let est = DistributionEstimate::uniform(g.clone());
        let cm = conditional_mass(&est, &K::Outstanding { s_bin: 1, tau_bin: 1 }).unwrap();
        let mut expected = vec![0.0; 5];
        expected[g.cell(1, 1)] = 1.0;
        assert_eq!(cm, expected);
        let cm = conditional_mass(&est, &K::Outstanding { s_bin: 0, tau_bin: 1 }).unwrap();
        assert_eq!(cm[g.cell(0, 1)], 0.5);
        assert_eq!(cm[g.cell(1, 1)], 0.5);
        assert_eq!(cm[g.cell(0, 0)], 0.0);
        assert_eq!(cm[g.atom()], 0.0);
    }

    #[test]
    fn unreported_conditional_on_3x3_grid() {
        // Size cells [0,1) [1,2) [2,∞); delay cells [0,1) [1,2) [2,3).
        let g = Grid::new(vec![0.0, 1.0, 2.0], vec![0, 1, 2, 3]).unwrap();
        // masses m(i,j) = (1 + i + 3j) / 100 … atom takes the rest.
        let mut mass: Vec<f64> = (0..9).map(|c| (1 + c / 3 + 3 * (c % 3)) as f64 / 100.0).collect();
        let finite: f64 = mass.iter().sum();
        mass.push(1.0 - finite);
        let est = DistributionEstimate::from_mass(g.clone(), mass.clone()).unwrap();
        // Deductible at edge 1 (split = 1), elapsed 1 → first open delay cell 2, L in cell 2.
        let key = K::NotReported {
            deductible_split: 1,
            first_open_tau_bin: 2,
            limit_bin: 2,
        };
        // Hand membership: size cell 0 with every delay cell, size cells 1–2 with
        // delay cell 2 only, plus the atom.
        let members = [
            g.cell(0, 0),
            g.cell(0, 1),
            g.cell(0, 2),
            g.cell(1, 2),
            g.cell(2, 2),
            g.atom(),
        ];
        let total: f64 = members.iter().map(|&c| mass[c]).sum();
        let cm = conditional_mass(&est, &key).unwrap();
        for c in 0..g.n_cells() {
            let want = if members.contains(&c) { mass[c] / total } else { 0.0 };
            assert!((cm[c] - want).abs() < 1e-15, "cell {c}");
        }
    }

    #[test]
    fn fully_observed_sample_gives_empirical_in_one_step() {
        let g = Grid::new(vec![0.0, 1.0, 2.0], vec![0, 1, 2]).unwrap();
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::Settled { s_bin: 0, tau_bin: 1 }, 3).unwrap();
        gs.insert(K::Settled { s_bin: 2, tau_bin: 0 }, 1).unwrap();
        gs.insert(K::ZeroClaim, 4).unwrap();
        let one = em_step(&DistributionEstimate::uniform(g.clone()), &gs).unwrap();
        let mut expected = vec![0.0; g.n_cells()];
        expected[g.cell(0, 1)] = 3.0 / 8.0;
        expected[g.cell(2, 0)] = 1.0 / 8.0;
        expected[g.atom()] = 0.5;
        assert_eq!(one.mass(), expected.as_slice());
        let two = em_step(&one, &gs).unwrap();
        assert_eq!(two.mass(), one.mass());
        let fitted = fit(&gs, &FitConfig::default()).unwrap();
        assert!(fitted.converged);
        assert_eq!(fitted.mass(), expected.as_slice());
    }

    #[test]
    fn single_outstanding_moves_mass_up() {
        let g = grid_1d(vec![0.0, 1.0]);
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::Outstanding { s_bin: 1, tau_bin: 0 }, 1).unwrap();
        let one = em_step(&DistributionEstimate::uniform(g.clone()), &gs).unwrap();
        assert_eq!(one.mass_at(1, 0), 1.0);
        assert_eq!(one.mass_at(0, 0), 0.0);
        assert_eq!(one.atom_mass(), 0.0);
    }

    #[test]
    fn fast_step_matches_definition() {
        let g = Grid::new(vec![0.0, 5.0, 10.0, 20.0], vec![0, 2, 4, 6, 8]).unwrap();
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::ZeroClaim, 50).unwrap();
        gs.insert(K::Settled { s_bin: 1, tau_bin: 0 }, 3).unwrap();
        gs.insert(K::Settled { s_bin: 3, tau_bin: 2 }, 1).unwrap();
        gs.insert(K::Outstanding { s_bin: 2, tau_bin: 1 }, 2).unwrap();
        gs.insert(
            K::NotReported {
                deductible_split: 1,
                first_open_tau_bin: 2,
                limit_bin: 3,
            },
            20,
        )
        .unwrap();
        gs.insert(
            K::NotReported {
                deductible_split: 0,
                first_open_tau_bin: 1,
                limit_bin: 2,
            },
            7,
        )
        .unwrap();
        let mut est = DistributionEstimate::uniform(g.clone());
        for _ in 0..5 {
            let fast = em_step(&est, &gs).unwrap();
            let slow = reference_step(&est, &gs);
            for (a, b) in fast.mass().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            }
            est = fast;
        }
    }

    #[test]
    fn two_interval_observations_split_evenly() {
        // One observation in [0,1) and one in [1,2), each filling a whole size cell.
        let g = Grid::new(vec![0.0, 1.0, 2.0], vec![0, 1]).unwrap();
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::Settled { s_bin: 0, tau_bin: 0 }, 1).unwrap();
        gs.insert(K::Settled { s_bin: 1, tau_bin: 0 }, 1).unwrap();
        let e = fit(&gs, &FitConfig::default()).unwrap();
        assert_eq!(e.mass_at(0, 0), 0.5);
        assert_eq!(e.mass_at(1, 0), 0.5);
    }

    #[test]
    fn zero_mass_set_is_reseeded_uniformly() {
        let g = Grid::new(vec![0.0, 1.0], vec![0, 1, 2]).unwrap();
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::Outstanding { s_bin: 0, tau_bin: 1 }, 2).unwrap();
        let mut start = vec![0.0; g.n_cells()];
        start[g.cell(0, 0)] = 1.0;
        let cfg = FitConfig {
            max_iterations: 1,
            init: Init::Custom(start),
            ..FitConfig::default()
        };
        let (est, trace) = fit_traced(&gs, &cfg).unwrap();
        assert_eq!(trace[0].reseeded, 1);
        assert_eq!(est.mass_at(0, 1), 0.5);
        assert_eq!(est.mass_at(1, 1), 0.5);
        assert!(!est.converged);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let g = Grid::new(vec![0.0, 1.0], vec![0, 1, 2]).unwrap();
        let mut gs = GroupedSample::new(g.clone());
        gs.insert(K::Settled { s_bin: 0, tau_bin: 0 }, 1).unwrap();
        gs.insert(
            K::NotReported {
                deductible_split: 0,
                first_open_tau_bin: 1,
                limit_bin: 1,
            },
            5,
        )
        .unwrap();
        let cfg = FitConfig {
            max_iterations: 1,
            ..FitConfig::default()
        };
        let e = fit(&gs, &cfg).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 1);
        assert!(e.final_delta > cfg.tolerance);
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::default();
        c.tolerance = 0.0;
        assert!(c.validate().is_err());
        c.tolerance = 1e-9;
        c.max_iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Grid::new(vec![0.0], vec![0, 1]).unwrap();
        let b = Grid::new(vec![0.0, 1.0], vec![0, 1]).unwrap();
        let mut gs = GroupedSample::new(b);
        gs.insert(K::ZeroClaim, 1).unwrap();
        assert!(em_step(&DistributionEstimate::uniform(a), &gs).is_err());
    }
}
