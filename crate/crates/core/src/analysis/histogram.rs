use crate::engine::ParticleState;
use crate::graph::EdgeId;
use crate::grid::Grid;

use super::oracle::SteadyStateOracle;
use super::AnalysisError;

/// Piecewise-constant density on a [`Grid`]: one value per cell.
pub trait DensityEstimate {
    fn grid(&self) -> &Grid;
    fn density(&self, e: EdgeId, cell: usize) -> f64;
}

/// Per-edge bin counts. `density = count / (total · width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    grid: Grid,
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl Histogram {
    pub fn empty(grid: Grid) -> Self {
        let counts = grid.edges().iter().map(|g| vec![0; g.cells]).collect();
        Self { grid, counts, total: 0 }
    }

    /// Bins one position; `x` at or past the last bin edge clamps into the
    /// last bin, negative `x` into the first.
    pub fn add(&mut self, e: EdgeId, x: f64) {
        let g = self.grid.edge(e);
        let bin = ((x / g.width).max(0.0) as usize).min(g.cells - 1);
        self.counts[e.0][bin] += 1;
        self.total += 1;
    }

    /// Adds another histogram's counts. Grids must match.
    pub fn merge(&mut self, other: &Histogram) -> Result<(), AnalysisError> {
        if self.grid != other.grid {
            return Err(AnalysisError::GridMismatch(
                "merging histograms on different grids".into(),
            ));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        self.total += other.total;
        Ok(())
    }

    pub fn counts(&self, e: EdgeId) -> &[u64] {
        &self.counts[e.0]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `Σ_e Σ_i ρ̂_{e,i} · w_e`; 1 for a nonempty histogram, 0 when empty.
    pub fn integral(&self) -> f64 {
        let mut s = 0.0;
        for (e, g) in self.grid.edges().iter().enumerate() {
            for i in 0..g.cells {
                s += self.density(EdgeId(e), i) * g.width;
            }
        }
        s
    }
}

impl DensityEstimate for Histogram {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn density(&self, e: EdgeId, cell: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[e.0][cell] as f64 / (self.total as f64 * self.grid.edge(e).width)
    }
}

/// Bins final particle positions. Grid edges must cover the graph's edges.
pub fn histogram_accumulate(states: &[ParticleState], grid: &Grid) -> Result<Histogram, AnalysisError> {
    let mut h = Histogram::empty(grid.clone());
    for s in states {
        if s.edge.0 >= grid.edge_count() {
            return Err(AnalysisError::GridMismatch(format!(
                "particle on edge {} but grid has {} edges",
                s.edge.0,
                grid.edge_count()
            )));
        }
        h.add(s.edge, s.x);
    }
    Ok(h)
}

/// `sqrt(Σ_e Σ_i (ρ̂_{e,i} − ρ_e(center_i))² · w_e)` against any reference.
pub fn l2_error_against(estimate: &impl DensityEstimate, reference: impl Fn(EdgeId, f64) -> f64) -> f64 {
    let mut s = 0.0;
    for (e, g) in estimate.grid().edges().iter().enumerate() {
        let id = EdgeId(e);
        for i in 0..g.cells {
            let d = estimate.density(id, i) - reference(id, g.center(i));
            s += d * d * g.width;
        }
    }
    s.sqrt()
}

pub fn l2_error(estimate: &impl DensityEstimate, oracle: &SteadyStateOracle) -> Result<f64, AnalysisError> {
    let n = estimate.grid().edge_count();
    if n != oracle.edge_count() {
        return Err(AnalysisError::GridMismatch(format!(
            "estimate has {n} edges, oracle has {}",
            oracle.edge_count()
        )));
    }
    Ok(l2_error_against(estimate, |e, x| oracle.density(e, x)))
}

/// L2 distance between two estimates on the same grid.
pub fn l2_distance(a: &impl DensityEstimate, b: &impl DensityEstimate) -> Result<f64, AnalysisError> {
    if a.grid() != b.grid() {
        return Err(AnalysisError::GridMismatch("estimates use different grids".into()));
    }
    let mut s = 0.0;
    for (e, g) in a.grid().edges().iter().enumerate() {
        let id = EdgeId(e);
        for i in 0..g.cells {
            let d = a.density(id, i) - b.density(id, i);
            s += d * d * g.width;
        }
    }
    Ok(s.sqrt())
}
