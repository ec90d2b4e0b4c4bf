use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Grid;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Tolerance on total mass accepted when loading an estimate from outside.
const LOAD_MASS_TOLERANCE: f64 = 1e-9;

/// Probability masses on a [`Grid`], including the `(0, ∞)` atom.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEstimate {
    grid: Grid,
    mass: Vec<f64>,
    /// EM updates applied.
    pub iterations: usize,
    /// Sup-norm CDF change of the last update.
    pub final_delta: f64,
    pub converged: bool,
}

/// One cell of a marginal distribution. The zero-claim atom has
/// `lo = hi = 0`; the `τ = ∞` column has `lo = hi = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalCell {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Companion metadata of an exported estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMetadata {
    pub grid: Grid,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
}

impl DistributionEstimate {
    /// Wraps externally supplied masses, checking length, sign and normalization.
    pub fn from_mass(grid: Grid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.n_cells() {
            return Err(Error::InvalidInput(format!(
                "expected {} cell masses, got {}",
                grid.n_cells(),
                mass.len()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidInput("masses must be finite and nonnegative".into()));
        }
        let total = compensated_sum(mass.iter().copied());
        if (total - 1.0).abs() > LOAD_MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!("masses sum to {total}, not 1")));
        }
        Ok(Self::from_parts(grid, mass))
    }

    pub(crate) fn from_parts(grid: Grid, mass: Vec<f64>) -> Self {
        Self {
            grid,
            mass,
            iterations: 0,
            final_delta: 0.0,
            converged: false,
        }
    }

    /// Equal mass on every cell, atom included.
    pub fn uniform(grid: Grid) -> Self {
        let n = grid.n_cells();
        Self::from_parts(grid, vec![1.0 / n as f64; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_at(&self, s_cell: usize, tau_cell: usize) -> f64 {
        self.mass[self.grid.cell(s_cell, tau_cell)]
    }

    pub fn atom_mass(&self) -> f64 {
        self.mass[self.grid.atom()]
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    /// `F(s, τ) = P(S < s, delay < τ)`; `tau = ∞` includes the `τ = ∞` column,
    /// so `cdf(∞, ∞) = 1`. Within a cell, mass is uniform in `s` (a point at the
    /// lower edge for the unbounded top cell) and uniform over the cell's
    /// integer delays.
    pub fn cdf(&self, s: f64, tau: f64) -> f64 {
        let g = &self.grid;
        let tau_upto = if tau.is_infinite() {
            None
        } else {
            Some(tau.ceil() as i64 - 1)
        };
        let mut terms = Vec::with_capacity(g.n_s() * g.n_tau() + 1);
        for i in 0..g.n_s() {
            let fs = g.s_fraction_below(i, s);
            if fs == 0.0 {
                continue;
            }
            for j in 0..g.n_tau() {
                let ft = g.tau_fraction(j, -1, tau_upto);
                if ft > 0.0 {
                    terms.push(self.mass_at(i, j) * fs * ft);
                }
            }
        }
        if tau.is_infinite() && s > 0.0 {
            terms.push(self.atom_mass());
        }
        compensated_sum(terms)
    }

    /// Claim-size marginal `F(s) = F(s, ∞)`: the zero atom first, then each
    /// size cell summed over all delays.
    pub fn marginal_claim(&self) -> Vec<MarginalCell> {
        let g = &self.grid;
        let mut out = vec![MarginalCell {
            lo: 0.0,
            hi: 0.0,
            mass: self.atom_mass(),
        }];
        for i in 0..g.n_s() {
            let (lo, hi) = g.s_bounds(i);
            let mass = compensated_sum((0..g.n_tau()).map(|j| self.mass_at(i, j)));
            out.push(MarginalCell { lo, hi, mass });
        }
        out
    }

    /// Delay marginal `F(∞, τ)`: finite delay cells, then the `τ = ∞` column.
    pub fn marginal_delay(&self) -> Vec<MarginalCell> {
        let g = &self.grid;
        let mut out: Vec<MarginalCell> = (0..g.n_tau())
            .map(|j| {
                let (lo, hi) = g.tau_bounds(j);
                MarginalCell {
                    lo: lo as f64,
                    hi: hi as f64,
                    mass: compensated_sum((0..g.n_s()).map(|i| self.mass_at(i, j))),
                }
            })
            .collect();
        out.push(MarginalCell {
            lo: f64::INFINITY,
            hi: f64::INFINITY,
            mass: self.atom_mass(),
        });
        out
    }

    pub fn metadata(&self) -> EstimateMetadata {
        EstimateMetadata {
            grid: self.grid.clone(),
            iterations: self.iterations,
            final_delta: self.final_delta,
            converged: self.converged,
        }
    }

    /// Writes `s_lo,s_hi,tau_lo,tau_hi,mass` rows at full precision; `inf`
    /// marks unbounded edges and the `τ = ∞` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s_lo", "s_hi", "tau_lo", "tau_hi", "mass"])?;
        for (s_lo, s_hi, tau_lo, tau_hi, mass) in self.rows() {
            w.write_record([
                fmt_edge(s_lo),
                fmt_edge(s_hi),
                fmt_edge(tau_lo),
                fmt_edge(tau_hi),
                mass.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<estimate>", e))?;
        Ok(())
    }

    fn rows(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let g = &self.grid;
        let mut rows = Vec::with_capacity(g.n_cells());
        for i in 0..g.n_s() {
            let (s_lo, s_hi) = g.s_bounds(i);
            for j in 0..g.n_tau() {
                let (t_lo, t_hi) = g.tau_bounds(j);
                rows.push((s_lo, s_hi, t_lo as f64, t_hi as f64, self.mass_at(i, j)));
            }
        }
        rows.push((0.0, 0.0, f64::INFINITY, f64::INFINITY, self.atom_mass()));
        rows
    }

    /// Reads masses written by [`write_csv`](Self::write_csv); rows must match
    /// the cells of `meta.grid` in order.
    pub fn read_csv<R: Read>(input: R, meta: EstimateMetadata, file: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let probe = Self::from_parts(meta.grid.clone(), vec![0.0; meta.grid.n_cells()]);
        let expected = probe.rows();
        let mut mass = Vec::with_capacity(expected.len());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let bad = |column: &str, message: String| Error::Parse {
                file: file.to_string(),
                row,
                column: column.to_string(),
                message,
            };
            let Some(exp) = expected.get(i) else {
                return Err(bad("s_lo", "more rows than grid cells".into()));
            };
            let mut vals = [0.0; 5];
            for (c, name) in ["s_lo", "s_hi", "tau_lo", "tau_hi", "mass"].iter().enumerate() {
                let v = rec.get(c).map(str::trim).unwrap_or("");
                vals[c] = parse_edge(v).ok_or_else(|| bad(name, format!("invalid number `{v}`")))?;
            }
            if (vals[0], vals[1], vals[2], vals[3]) != (exp.0, exp.1, exp.2, exp.3) {
                return Err(bad("s_lo", "cell bounds do not match the grid".into()));
            }
            mass.push(vals[4]);
        }
        let mut est = Self::from_mass(meta.grid, mass)?;
        est.iterations = meta.iterations;
        est.final_delta = meta.final_delta;
        est.converged = meta.converged;
        Ok(est)
    }
}

fn fmt_edge(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn parse_edge(v: &str) -> Option<f64> {
    if v.eq_ignore_ascii_case("inf") {
        Some(f64::INFINITY)
    } else {
        v.parse().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2 size cells × 2 delay cells + atom, hand-chosen masses.
    fn hand() -> DistributionEstimate {
        let g = Grid::new(vec![0.0, 10.0], vec![0, 2, 4]).unwrap();
        DistributionEstimate::from_mass(g, vec![0.1, 0.2, 0.05, 0.15, 0.5]).unwrap()
    }

    #[test]
    fn normalization_and_left_limit() {
        let e = hand();
        assert!((e.cdf(f64::INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert_eq!(e.cdf(0.0, f64::INFINITY), 0.0);
        assert_eq!(e.cdf(-1.0, 3.0), 0.0);
    }

    #[test]
    fn corner_values_are_partial_sums() {
        let e = hand();
        // Corners at s ∈ {10, ∞}, τ ∈ {2, 4}.
        assert!((e.cdf(10.0, 2.0) - 0.1).abs() < 1e-15);
        assert!((e.cdf(10.0, 4.0) - 0.3).abs() < 1e-15);
        assert!((e.cdf(f64::INFINITY, 2.0) - 0.15).abs() < 1e-15);
        assert!((e.cdf(f64::INFINITY, 4.0) - 0.5).abs() < 1e-15);
        assert!((e.cdf(10.0, f64::INFINITY) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cdf_is_monotone_in_both_arguments() {
        let e = hand();
        let ss = [0.0, 1.0, 5.0, 10.0, 11.0, 1e9, f64::INFINITY];
        let ts = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 100.0, f64::INFINITY];
        for w in ss.windows(2) {
            for &t in &ts {
                assert!(e.cdf(w[0], t) <= e.cdf(w[1], t) + 1e-15);
            }
        }
        for w in ts.windows(2) {
            for &s in &ss {
                assert!(e.cdf(s, w[0]) <= e.cdf(s, w[1]) + 1e-15);
            }
        }
    }

    #[test]
    fn marginals_sum_to_one_and_include_atom() {
        let e = hand();
        let mc = e.marginal_claim();
        assert_eq!(mc[0].mass, 0.5);
        assert!((mc.iter().map(|c| c.mass).sum::<f64>() - 1.0).abs() < 1e-15);
        let md = e.marginal_delay();
        assert_eq!(md.last().unwrap().mass, 0.5);
        assert!((md[0].mass - 0.15).abs() < 1e-15);
    }

    #[test]
    fn product_form_marginals_factorize() {
        let g = Grid::new(vec![0.0, 1.0, 2.0], vec![0, 1, 2]).unwrap();
        let ps = [0.2, 0.3, 0.5];
        let pt = [0.4, 0.6];
        let finite = 0.1;
        let mut mass = Vec::new();
        for a in ps {
            for b in pt {
                mass.push(finite * a * b);
            }
        }
        mass.push(1.0 - finite);
        let e = DistributionEstimate::from_mass(g, mass).unwrap();
        let mc = e.marginal_claim();
        for (i, a) in ps.iter().enumerate() {
            assert!((mc[i + 1].mass - finite * a).abs() < 1e-15);
        }
        let md = e.marginal_delay();
        for (j, b) in pt.iter().enumerate() {
            assert!((md[j].mass - finite * b).abs() < 1e-15);
        }
        for i in 0..3 {
            for j in 0..2 {
                let joint = e.mass_at(i, j);
                assert!((joint - mc[i + 1].mass * md[j].mass / finite).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_unnormalized_or_negative() {
        let g = Grid::new(vec![0.0], vec![0, 1]).unwrap();
        assert!(DistributionEstimate::from_mass(g.clone(), vec![0.5, 0.4]).is_err());
        assert!(DistributionEstimate::from_mass(g.clone(), vec![1.5, -0.5]).is_err());
        assert!(DistributionEstimate::from_mass(g, vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let e = hand();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().last().unwrap().starts_with("0,0,inf,inf,"));
        let back = DistributionEstimate::read_csv(buf.as_slice(), e.metadata(), "est.csv").unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn round_trip_through_json_metadata_keeps_log_spaced_edges() {
        let mut edges = vec![0.0, 5.0];
        for _ in 0..45 {
            edges.push(edges.last().unwrap() * 1.25);
        }
        let g = Grid::new(edges, Grid::uniform_tau_edges(1, 24)).unwrap();
        let n = g.n_cells();
        let e = DistributionEstimate::from_mass(g, vec![1.0 / n as f64; n]).unwrap();
        let meta: EstimateMetadata =
            serde_json::from_str(&serde_json::to_string(&e.metadata()).unwrap()).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let back = DistributionEstimate::read_csv(buf.as_slice(), meta, "est.csv").unwrap();
        assert_eq!(back, e);
    }
}
