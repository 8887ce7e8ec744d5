//! Finite-volume Fokker-Planck baseline: upwind drift, central diffusion,
//! explicit Euler in time.
//!
//! At a vertex the cells adjacent to it exchange mass pairwise. Densities
//! are compared through `c_i = ρ_i / b_{v,i}`. Drift toward the vertex on
//! edge `i` sends `m_i·c_i` split over the other edges in proportion to
//! `b_{v,j}`. Diffusion moves `D·(c_i − c_j)/h_ij·b_{v,j}` from the edge
//! with larger `c` to the one with smaller `c`, so each pair exchanges one
//! signed amount and vertex transfer conserves mass exactly.

use thiserror::Error;

use crate::analysis::DensityEstimate;
use crate::coeffs::CoefficientField;
use crate::graph::{EdgeId, MetricGraph, Orientation, VertexId};
use crate::grid::{Grid, GridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FvmError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("unstable timestep: dt = {dt} gives CFL number {cfl:.4} > 1; stable limit is dt ≤ {limit:.6e}")]
    UnstableTimestep { dt: f64, cfl: f64, limit: f64 },
    #[error("negative density {value:.3e} on edge {edge} cell {cell} at step {step}")]
    NegativeDensity {
        edge: usize,
        cell: usize,
        step: u64,
        value: f64,
    },
    #[error("jump weight of edge {edge} at vertex {vertex} is zero")]
    ZeroJumpWeightAtVertex { vertex: usize, edge: usize },
    #[error("state does not match the grid")]
    StateMismatch,
    #[error("dt must be positive and finite, got {0}")]
    BadTimestep(f64),
}

/// FVM cells: at least two per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FvmGrid {
    grid: Grid,
}

impl FvmGrid {
    pub fn new(graph: &MetricGraph, grid: Grid) -> Result<Self, FvmError> {
        grid.check_graph(graph)?;
        for (e, g) in grid.edges().iter().enumerate() {
            if g.cells < 2 {
                return Err(GridError::TooFewCells {
                    edge: e,
                    cells: g.cells,
                    min: 2,
                }
                .into());
            }
        }
        Ok(Self { grid })
    }

    /// `cells` per edge; semi-infinite edges are cut at `truncation(e)`.
    pub fn uniform(
        graph: &MetricGraph,
        cells: usize,
        truncation: impl Fn(EdgeId) -> Option<f64>,
    ) -> Result<Self, FvmError> {
        Self::new(graph, Grid::for_graph(graph, cells, truncation)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvmState {
    grid: Grid,
    pub densities: Vec<Vec<f64>>,
    pub t: f64,
}

impl FvmState {
    /// Density `f(e, center)` in every cell, renormalized to unit mass.
    pub fn from_fn(grid: &FvmGrid, f: impl Fn(EdgeId, f64) -> f64) -> Self {
        let grid = grid.grid.clone();
        let densities = grid
            .edges()
            .iter()
            .enumerate()
            .map(|(e, g)| (0..g.cells).map(|i| f(EdgeId(e), g.center(i))).collect())
            .collect();
        let mut s = Self {
            grid,
            densities,
            t: 0.0,
        };
        let m = s.mass();
        if m > 0.0 {
            for row in &mut s.densities {
                row.iter_mut().for_each(|r| *r /= m);
            }
        }
        s
    }

    /// Unit mass spread evenly over the whole covered domain.
    pub fn uniform(grid: &FvmGrid) -> Self {
        Self::from_fn(grid, |_, _| 1.0)
    }

    /// Unit mass in one cell.
    pub fn point_mass(grid: &FvmGrid, e: EdgeId, cell: usize) -> Self {
        Self::from_fn(grid, |edge, x| {
            let g = grid.grid.edge(edge);
            (edge == e && (x / g.width) as usize == cell) as u8 as f64
        })
    }

    pub fn mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.grid.edges())
            .map(|(row, g)| row.iter().sum::<f64>() * g.width)
            .sum()
    }
}

impl DensityEstimate for FvmState {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn density(&self, e: EdgeId, cell: usize) -> f64 {
        self.densities[e.0][cell]
    }
}

fn cell_at(g: &crate::grid::EdgeGrid, end: Orientation) -> usize {
    match end {
        Orientation::AtInit => 0,
        Orientation::AtTerm => g.cells - 1,
    }
}

/// Flux through each interior face; face `k` sits between cells `k` and
/// `k + 1`, positive in the direction of increasing `x`.
pub fn fvm_interior_fluxes(state: &FvmState, field: &CoefficientField, grid: &FvmGrid) -> Vec<Vec<f64>> {
    grid.grid
        .edges()
        .iter()
        .enumerate()
        .map(|(e, g)| {
            let rho = &state.densities[e];
            (0..g.cells - 1)
                .map(|k| {
                    let xf = (k + 1) as f64 * g.width;
                    let mu = field.eval_drift(EdgeId(e), xf);
                    let sigma = field.eval_diffusion(EdgeId(e), xf);
                    let up = if mu > 0.0 { rho[k] } else { rho[k + 1] };
                    mu * up - 0.5 * sigma * sigma * (rho[k + 1] - rho[k]) / g.width
                })
                .collect()
        })
        .collect()
}

/// One vertex's exchange data, precomputed.
#[derive(Debug, Clone)]
struct Junction {
    edges: Vec<EdgeId>,
    cells: Vec<usize>,
    weights: Vec<f64>,
    /// Drift speed toward the vertex on each edge, clamped at 0.
    inflow_speed: Vec<f64>,
    /// `D_ij / h_ij · b_j` for each ordered pair, row-major.
    conductance: Vec<f64>,
    /// `b_j / Σ_{k≠i} b_k` for each ordered pair, row-major.
    share: Vec<f64>,
}

impl Junction {
    fn build(
        graph: &MetricGraph,
        field: &CoefficientField,
        grid: &Grid,
        v: VertexId,
    ) -> Result<Option<Self>, FvmError> {
        let inc = graph.incidence(v);
        let n = inc.degree();
        if n < 2 {
            return Ok(None);
        }
        if let Some(s) = inc.jump_weights.iter().position(|&b| b <= 0.0) {
            return Err(FvmError::ZeroJumpWeightAtVertex {
                vertex: v.0,
                edge: inc.edges[s].0,
            });
        }
        let mut cells = Vec::with_capacity(n);
        let mut inflow_speed = Vec::with_capacity(n);
        let mut diff = Vec::with_capacity(n);
        for (&e, &o) in inc.edges.iter().zip(&inc.orientations) {
            cells.push(cell_at(grid.edge(e), o));
            let (mu, sigma) = field.at_end(graph, e, o);
            let toward = match o {
                Orientation::AtInit => -mu,
                Orientation::AtTerm => mu,
            };
            inflow_speed.push(toward.max(0.0));
            diff.push(0.5 * sigma * sigma);
        }
        let b = &inc.jump_weights;
        let total: f64 = b.iter().sum();
        let mut conductance = vec![0.0; n * n];
        let mut share = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let h = 0.5 * (grid.edge(inc.edges[i]).width + grid.edge(inc.edges[j]).width);
                conductance[i * n + j] = 0.5 * (diff[i] + diff[j]) / h * b[j];
                share[i * n + j] = b[j] / (total - b[i]);
            }
        }
        Ok(Some(Self {
            edges: inc.edges.clone(),
            cells,
            weights: b.clone(),
            inflow_speed,
            conductance,
            share,
        }))
    }

    /// Net flux into each incident edge's vertex cell.
    fn net_inflow(&self, densities: &[Vec<f64>], out: &mut [f64]) {
        let n = self.edges.len();
        out[..n].iter_mut().for_each(|o| *o = 0.0);
        let c = |i: usize| densities[self.edges[i].0][self.cells[i]] / self.weights[i];
        for i in 0..n {
            let ci = c(i);
            let drift_out = self.inflow_speed[i] * ci;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut f = drift_out * self.share[i * n + j];
                let cj = c(j);
                if ci > cj {
                    f += self.conductance[i * n + j] * (ci - cj);
                }
                out[i] -= f;
                out[j] += f;
            }
        }
    }

    /// Outflow rate per unit density of each vertex cell, worst case over
    /// the direction of the diffusion exchange.
    fn outflow_rates(&self) -> Vec<f64> {
        let n = self.edges.len();
        (0..n)
            .map(|i| {
                let diff: f64 = (0..n).filter(|&j| j != i).map(|j| self.conductance[i * n + j]).sum();
                (self.inflow_speed[i] + diff) / self.weights[i]
            })
            .collect()
    }
}

/// Net boundary flux into each edge incident to `v`, in incidence order.
pub fn fvm_vertex_fluxes(
    state: &FvmState,
    field: &CoefficientField,
    graph: &MetricGraph,
    grid: &FvmGrid,
    v: VertexId,
) -> Result<Vec<f64>, FvmError> {
    let n = graph.incidence(v).degree();
    let mut out = vec![0.0; n];
    if let Some(j) = Junction::build(graph, field, &grid.grid, v)? {
        j.net_inflow(&state.densities, &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FvmOptions {
    /// Run even when the CFL check fails.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvmRun {
    pub state: FvmState,
    pub max_cfl: f64,
    pub steps: u64,
}

/// Precomputed operator for one (graph, field, grid).
struct Operator {
    mu_face: Vec<Vec<f64>>,
    d_face: Vec<Vec<f64>>,
    widths: Vec<f64>,
    junctions: Vec<Junction>,
    /// Largest outflow rate per unit density over all cells.
    max_rate: f64,
}

impl Operator {
    fn new(graph: &MetricGraph, field: &CoefficientField, grid: &Grid) -> Result<Self, FvmError> {
        let mut mu_face = Vec::with_capacity(grid.edge_count());
        let mut d_face = Vec::with_capacity(grid.edge_count());
        let mut rates: Vec<Vec<f64>> = Vec::with_capacity(grid.edge_count());
        for (e, g) in grid.edges().iter().enumerate() {
            let faces: Vec<f64> = (1..g.cells).map(|k| k as f64 * g.width).collect();
            let mu: Vec<f64> = faces.iter().map(|&x| field.eval_drift(EdgeId(e), x)).collect();
            let d: Vec<f64> = faces
                .iter()
                .map(|&x| 0.5 * field.eval_diffusion(EdgeId(e), x).powi(2))
                .collect();
            let mut r = vec![0.0; g.cells];
            for k in 0..g.cells - 1 {
                // face k: cell k on the left, k + 1 on the right
                let diff = d[k] / g.width;
                r[k] += mu[k].max(0.0) + diff;
                r[k + 1] += (-mu[k]).max(0.0) + diff;
            }
            r.iter_mut().for_each(|x| *x /= g.width);
            mu_face.push(mu);
            d_face.push(d);
            rates.push(r);
        }
        let mut junctions = Vec::new();
        for v in graph.finite_vertices() {
            if let Some(j) = Junction::build(graph, field, grid, v)? {
                for (i, rate) in j.outflow_rates().into_iter().enumerate() {
                    let e = j.edges[i].0;
                    rates[e][j.cells[i]] += rate / grid.edges()[e].width;
                }
                junctions.push(j);
            }
        }
        let max_rate = rates.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        Ok(Self {
            mu_face,
            d_face,
            widths: grid.edges().iter().map(|g| g.width).collect(),
            junctions,
            max_rate,
        })
    }

    fn limit(&self) -> f64 {
        if self.max_rate > 0.0 {
            1.0 / self.max_rate
        } else {
            f64::INFINITY
        }
    }

    /// `rhs ← dρ/dt`.
    fn rate_of_change(&self, rho: &[Vec<f64>], rhs: &mut [Vec<f64>], scratch: &mut [f64]) {
        for (e, row) in rho.iter().enumerate() {
            let out = &mut rhs[e];
            out.iter_mut().for_each(|x| *x = 0.0);
            let w = self.widths[e];
            let (mu, d) = (&self.mu_face[e], &self.d_face[e]);
            for k in 0..row.len() - 1 {
                let up = if mu[k] > 0.0 { row[k] } else { row[k + 1] };
                let f = (mu[k] * up - d[k] * (row[k + 1] - row[k]) / w) / w;
                out[k] -= f;
                out[k + 1] += f;
            }
        }
        for j in &self.junctions {
            j.net_inflow(rho, scratch);
            for (i, &f) in scratch[..j.edges.len()].iter().enumerate() {
                let e = j.edges[i].0;
                rhs[e][j.cells[i]] += f / self.widths[e];
            }
        }
    }
}

/// Largest dt for which every cell keeps a nonnegative density under the
/// explicit update. On an interior cell this is `1/(|μ|/Δx + 2D/Δx²)`.
pub fn fvm_stability_limit(graph: &MetricGraph, field: &CoefficientField, grid: &FvmGrid) -> Result<f64, FvmError> {
    Ok(Operator::new(graph, field, &grid.grid)?.limit())
}

struct Stepper {
    op: Operator,
    rhs: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(op: Operator, grid: &Grid) -> Self {
        let max_deg = op.junctions.iter().map(|j| j.edges.len()).max().unwrap_or(0);
        Self {
            rhs: grid.edges().iter().map(|g| vec![0.0; g.cells]).collect(),
            scratch: vec![0.0; max_deg],
            op,
        }
    }

    /// Advances one step and returns `max |Δρ|`.
    fn step(&mut self, state: &mut FvmState, dt: f64, step: u64) -> Result<f64, FvmError> {
        self.op
            .rate_of_change(&state.densities, &mut self.rhs, &mut self.scratch);
        let mut change: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for (row, d) in state.densities.iter_mut().zip(&self.rhs) {
            for (r, dr) in row.iter_mut().zip(d) {
                let inc = dt * dr;
                *r += inc;
                change = change.max(inc.abs());
                peak = peak.max(r.abs());
            }
        }
        state.t += dt;
        let floor = -1e-12 * peak.max(f64::MIN_POSITIVE);
        for (e, row) in state.densities.iter().enumerate() {
            if let Some(cell) = row.iter().position(|&r| r < floor || !r.is_finite()) {
                return Err(FvmError::NegativeDensity {
                    edge: e,
                    cell,
                    step,
                    value: row[cell],
                });
            }
        }
        Ok(change)
    }
}

fn prepare(
    graph: &MetricGraph,
    field: &CoefficientField,
    grid: &FvmGrid,
    dt: f64,
    initial: &FvmState,
    options: FvmOptions,
) -> Result<(Stepper, f64), FvmError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FvmError::BadTimestep(dt));
    }
    if initial.grid != grid.grid {
        return Err(FvmError::StateMismatch);
    }
    let op = Operator::new(graph, field, &grid.grid)?;
    let cfl = dt * op.max_rate;
    if cfl > 1.0 && !options.force {
        return Err(FvmError::UnstableTimestep {
            dt,
            cfl,
            limit: op.limit(),
        });
    }
    Ok((Stepper::new(op, &grid.grid), cfl))
}

/// Advances `initial` by `n_steps` explicit Euler steps.
pub fn fvm_run(
    graph: &MetricGraph,
    field: &CoefficientField,
    grid: &FvmGrid,
    dt: f64,
    n_steps: u64,
    initial: FvmState,
    options: FvmOptions,
) -> Result<FvmRun, FvmError> {
    let (mut stepper, max_cfl) = prepare(graph, field, grid, dt, &initial, options)?;
    let mut state = initial;
    for step in 1..=n_steps {
        stepper.step(&mut state, dt, step)?;
    }
    Ok(FvmRun {
        state,
        max_cfl,
        steps: n_steps,
    })
}

/// Steps until `max |Δρ| / dt` falls below `tol` or `max_steps` is reached.
pub fn fvm_steady_state(
    graph: &MetricGraph,
    field: &CoefficientField,
    grid: &FvmGrid,
    dt: f64,
    tol: f64,
    max_steps: u64,
    initial: FvmState,
) -> Result<FvmRun, FvmError> {
    let (mut stepper, max_cfl) = prepare(graph, field, grid, dt, &initial, FvmOptions::default())?;
    let mut state = initial;
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        if stepper.step(&mut state, dt, steps)? / dt < tol {
            break;
        }
    }
    Ok(FvmRun { state, max_cfl, steps })
}
