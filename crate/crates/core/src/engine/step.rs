//! One timestep-splitting Euler-Maruyama step for a single particle.

use crate::coeffs::CoefficientField;
use crate::graph::{Edge, EdgeId, MetricGraph, Orientation};

use super::alpha::first_hit_root;
use super::rng::RngStream;

/// Default cap on at-vertex proposals within one step.
pub const DEFAULT_MAX_SPLITS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub edge: EdgeId,
    /// Distance from the edge's init vertex.
    pub x: f64,
    /// Vertex crossings accumulated over all steps.
    pub crossings_total: u64,
    /// Steps in which at least one crossing happened.
    pub crossing_events: u64,
}

impl ParticleState {
    pub fn new(edge: EdgeId, x: f64) -> Self {
        Self {
            edge,
            x,
            crossings_total: 0,
            crossing_events: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: ParticleState,
    /// Number of vertex crossings `M` resolved in this step.
    pub crossings: u32,
    /// Set when the split cap stopped the step early; the particle is then
    /// left at the vertex and the rest of the step is dropped.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub max_splits: u32,
    /// Optional reflecting wall on star edges: proposals beyond it are
    /// mirrored back (`x ← 2L − x̃`). Ignored on general graphs.
    pub outer_wall: Option<f64>,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            max_splits: DEFAULT_MAX_SPLITS,
            outer_wall: None,
        }
    }
}

/// One step on a star graph: free proposal, split at the vertex on
/// overshoot, then one-sided at-vertex proposals on freshly sampled edges
/// until one stays on its edge.
pub fn em_step_star(
    graph: &MetricGraph,
    field: &CoefficientField,
    state: ParticleState,
    dt: f64,
    rng: &mut RngStream,
    params: &StepParams,
) -> StepOutcome {
    debug_assert!(graph.is_star());
    split_step(
        graph,
        field,
        state,
        dt,
        dt.sqrt(),
        rng,
        params.max_splits,
        params.outer_wall,
    )
}

/// One step on a graph whose edges are all finite. Both ends of the current
/// edge are checked; a hit vertex hands the particle to the sampled edge at
/// the matching end and the remaining time is stepped again.
pub fn em_step_general(
    graph: &MetricGraph,
    field: &CoefficientField,
    state: ParticleState,
    dt: f64,
    rng: &mut RngStream,
    params: &StepParams,
) -> StepOutcome {
    debug_assert!(graph.all_edges_finite());
    split_step(graph, field, state, dt, dt.sqrt(), rng, params.max_splits, None)
}

#[inline]
fn vertex_end(edge: &Edge, x: f64) -> Option<Orientation> {
    if x <= 0.0 {
        Some(Orientation::AtInit)
    } else if x >= edge.length {
        Some(Orientation::AtTerm)
    } else {
        None
    }
}

/// Shared splitting loop.
///
/// A particle sitting exactly on a vertex proposes a one-sided excursion
/// `σ√Δt·|W|` into its edge. If that excursion returns to the same vertex the
/// fraction of time used is the nonzero root `(b/a)²`, i.e.
/// `α = W²σ²/(μ²Δt)`; hits on the opposite end use [`first_hit_root`].
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn split_step(
    graph: &MetricGraph,
    field: &CoefficientField,
    state: ParticleState,
    dt: f64,
    sqrt_dt: f64,
    rng: &mut RngStream,
    max_splits: u32,
    outer_wall: Option<f64>,
) -> StepOutcome {
    let mut edge = state.edge;
    let mut x = state.x;
    let mut remaining = dt;
    let mut crossings = 0u32;
    let mut truncated = false;

    let mut at = vertex_end(graph.edge(edge), x);
    if let Some(end) = at {
        // the edge label of a particle parked on a vertex carries no
        // information; draw the exit edge afresh
        let v = graph.edge(edge).endpoint(end);
        let (e, o) = graph.sample_slot_unchecked(v, rng.uniform());
        edge = e;
        x = graph.edge(e).end_position(o);
        at = Some(o);
    }

    loop {
        if at.is_some() {
            if crossings == max_splits {
                truncated = true;
                break;
            }
            crossings += 1;
        }
        let info = graph.edge(edge);
        let len = info.length;
        let mu = field.eval_drift(edge, x);
        let sigma = field.eval_diffusion(edge, x);
        let root_dt = if remaining == dt { sqrt_dt } else { remaining.sqrt() };
        let w = rng.normal();
        let spread = sigma * root_dt;
        let noise = match at {
            None => spread * w,
            Some(Orientation::AtInit) => spread * w.abs(),
            Some(Orientation::AtTerm) => -spread * w.abs(),
        };
        let drift = mu * remaining;
        let proposal = x + drift + noise;

        if let Some(wall) = outer_wall {
            if proposal > wall {
                x = (2.0 * wall - proposal).max(0.0);
                break;
            }
        }
        let stays = match at {
            None => proposal > 0.0 && proposal < len,
            Some(Orientation::AtInit) => proposal >= 0.0 && proposal < len,
            Some(Orientation::AtTerm) => proposal > 0.0 && proposal <= len,
        };
        if stays {
            x = proposal;
            break;
        }

        let hit_init = proposal <= 0.0;
        let (a, b, c) = if hit_init {
            (drift, noise, x)
        } else {
            (-drift, -noise, len - x)
        };
        let alpha = if c <= 0.0 {
            let s = b / a;
            (s * s).min(1.0)
        } else {
            let s = first_hit_root(a, b, c);
            s * s
        };
        remaining *= 1.0 - alpha;

        let hit = if hit_init {
            Orientation::AtInit
        } else {
            Orientation::AtTerm
        };
        let v = info.endpoint(hit);
        let (e, o) = graph.sample_slot_unchecked(v, rng.uniform());
        edge = e;
        x = graph.edge(e).end_position(o);
        at = Some(o);

        if remaining <= 0.0 {
            // reached the vertex with no time left
            if crossings < max_splits {
                crossings += 1;
            }
            break;
        }
    }

    StepOutcome {
        state: ParticleState {
            edge,
            x,
            crossings_total: state.crossings_total + u64::from(crossings),
            crossing_events: state.crossing_events + u64::from(crossings > 0),
        },
        crossings,
        truncated,
    }
}
