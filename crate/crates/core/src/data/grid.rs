use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretization of the `(claim size, reporting delay)` plane.
///
/// Positive claim cells are `[s_edges[i], s_edges[i + 1])`, with the last one
/// unbounded above: `[s_edges[last], ∞)`. Delay cells are
/// `[tau_edges[j], tau_edges[j + 1])` in whole time units; a cell covers the
/// integer delays `lo..hi`. Besides the `n_s × n_tau` rectangle there is one
/// extra cell: the zero-claim atom `(s = 0, τ = ∞)`.
///
/// Mass vectors over a grid are laid out s-major (`i * n_tau + j`) with the
/// atom last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDescriptor", into = "GridDescriptor")]
pub struct Grid {
    s_edges: Vec<f64>,
    tau_edges: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct GridDescriptor {
    s_edges: Vec<f64>,
    tau_edges: Vec<u32>,
    #[serde(default = "yes")]
    has_tau_infinity_atom: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<GridDescriptor> for Grid {
    type Error = Error;

    fn try_from(d: GridDescriptor) -> Result<Self> {
        if !d.has_tau_infinity_atom {
            return Err(Error::Grid("the τ = ∞ atom cannot be disabled".into()));
        }
        Grid::new(d.s_edges, d.tau_edges)
    }
}

impl From<Grid> for GridDescriptor {
    fn from(g: Grid) -> Self {
        GridDescriptor {
            s_edges: g.s_edges,
            tau_edges: g.tau_edges,
            has_tau_infinity_atom: true,
        }
    }
}

impl Grid {
    pub fn new(s_edges: Vec<f64>, tau_edges: Vec<u32>) -> Result<Self> {
        if s_edges.is_empty() || s_edges[0] != 0.0 {
            return Err(Error::Grid("claim-size edges must start at 0".into()));
        }
        if s_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Grid("claim-size edges must be finite".into()));
        }
        if s_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Grid("claim-size edges must be strictly ascending".into()));
        }
        if tau_edges.len() < 2 || tau_edges[0] != 0 {
            return Err(Error::Grid(
                "delay edges must start at 0 and define at least one cell".into(),
            ));
        }
        if tau_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Grid("delay edges must be strictly ascending".into()));
        }
        Ok(Self { s_edges, tau_edges })
    }

    /// Delay edges `0, step, 2·step, …` reaching past `max_delay`.
    pub fn uniform_tau_edges(step: u32, max_delay: u32) -> Vec<u32> {
        assert!(step > 0, "delay step must be positive");
        let mut edges = vec![0];
        while *edges.last().unwrap() <= max_delay {
            edges.push(edges.last().unwrap() + step);
        }
        edges
    }

    pub fn s_edges(&self) -> &[f64] {
        &self.s_edges
    }

    pub fn tau_edges(&self) -> &[u32] {
        &self.tau_edges
    }

    /// Number of positive claim-size cells (the last one unbounded).
    pub fn n_s(&self) -> usize {
        self.s_edges.len()
    }

    /// Number of finite delay cells.
    pub fn n_tau(&self) -> usize {
        self.tau_edges.len() - 1
    }

    /// Total number of cells including the zero-claim atom.
    pub fn n_cells(&self) -> usize {
        self.n_s() * self.n_tau() + 1
    }

    /// Index of the `(0, ∞)` atom in mass vectors.
    pub fn atom(&self) -> usize {
        self.n_s() * self.n_tau()
    }

    #[inline]
    pub fn cell(&self, s_cell: usize, tau_cell: usize) -> usize {
        s_cell * self.n_tau() + tau_cell
    }

    pub fn s_bounds(&self, s_cell: usize) -> (f64, f64) {
        let lo = self.s_edges[s_cell];
        let hi = self.s_edges.get(s_cell + 1).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn tau_bounds(&self, tau_cell: usize) -> (u32, u32) {
        (self.tau_edges[tau_cell], self.tau_edges[tau_cell + 1])
    }

    /// Largest delay representable on the grid.
    pub fn max_delay(&self) -> u32 {
        self.tau_edges[self.tau_edges.len() - 1] - 1
    }

    /// Claim-size cell holding `amount` under the `[lo, hi)` convention.
    pub fn s_bin(&self, amount: f64) -> Result<usize> {
        if !amount.is_finite() || amount < 0.0 {
            return Err(Error::OutsideGrid(format!(
                "claim amount {amount} is not a finite nonnegative value"
            )));
        }
        let last = self.s_edges[self.s_edges.len() - 1];
        if amount > last {
            return Err(Error::OutsideGrid(format!(
                "claim amount {amount} exceeds the last claim-size edge {last}; extend the grid"
            )));
        }
        Ok(self.s_edges.partition_point(|&e| e <= amount) - 1)
    }

    /// Delay cell holding the integer delay `delay`.
    pub fn tau_bin(&self, delay: u32) -> Result<usize> {
        if delay > self.max_delay() {
            return Err(Error::OutsideGrid(format!(
                "delay {delay} exceeds the last delay edge {}; extend the grid",
                self.tau_edges[self.tau_edges.len() - 1]
            )));
        }
        Ok(self.tau_edges.partition_point(|&e| e <= delay) - 1)
    }

    /// Number of claim-size cells that can hold a claim at or below the
    /// deductible `d` (cells whose lower edge is below `d`).
    pub fn deductible_split(&self, deductible: f64) -> usize {
        self.s_edges.partition_point(|&e| e < deductible)
    }

    /// Value standing in for the claims of a cell in expectations: the
    /// midpoint, or the lower edge for the unbounded top cell.
    pub fn s_representative(&self, s_cell: usize) -> f64 {
        let (lo, hi) = self.s_bounds(s_cell);
        if hi.is_infinite() {
            lo
        } else {
            0.5 * (lo + hi)
        }
    }

    /// Share of a delay cell's integer delays lying in `(after, up_to]`,
    /// treating mass as uniform over the delays of the cell. `up_to = None`
    /// means unbounded.
    pub fn tau_fraction(&self, tau_cell: usize, after: i64, up_to: Option<i64>) -> f64 {
        let (lo, hi) = self.tau_bounds(tau_cell);
        let first = (after + 1).max(lo as i64);
        let last = up_to.map_or(hi as i64 - 1, |b| b.min(hi as i64 - 1));
        if last < first {
            0.0
        } else {
            (last - first + 1) as f64 / (hi - lo) as f64
        }
    }

    /// Share of claim-size cell `s_cell` strictly below `s` under a uniform
    /// within-cell law; the unbounded top cell is a point mass at its lower edge.
    pub fn s_fraction_below(&self, s_cell: usize, s: f64) -> f64 {
        let (lo, hi) = self.s_bounds(s_cell);
        if s <= lo {
            0.0
        } else if s >= hi || hi.is_infinite() {
            1.0
        } else {
            (s - lo) / (hi - lo)
        }
    }
}
