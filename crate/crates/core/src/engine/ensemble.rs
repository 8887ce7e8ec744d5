//! Many-particle driver.
//!
//! Particles are independent: particle `i` draws only from stream `i`, so
//! its trajectory is a pure function of `(seed, i)`. Work is cut into fixed
//! chunks of particles whose partial statistics are merged in chunk order,
//! which keeps results identical for any worker count.

use crate::analysis::BounceStats;
use crate::coeffs::CoefficientField;
use crate::graph::{EdgeId, MetricGraph, VertexId, VertexKind};

use super::rng::{RngStream, StreamKey};
use super::step::{split_step, ParticleState, DEFAULT_MAX_SPLITS};
use super::EngineError;

/// Particles per work item. Independent of the worker count by design of
/// the determinism contract.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// On the given vertex; the first step samples the exit edge.
    AtVertex(VertexId),
    Point(EdgeId, f64),
    /// Particle `i` starts on edge `i mod |E|`, uniform on
    /// `[0, min(length, x_max)]`.
    PerEdgeUniform(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub n_steps: u64,
    pub n_particles: usize,
    pub seed: u64,
    pub max_splits_per_step: u32,
    pub initial: InitialDistribution,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Reflecting wall on star edges, see [`super::StepParams`].
    pub outer_wall: Option<f64>,
}

impl SimulationConfig {
    pub fn new(dt: f64, n_steps: u64, n_particles: usize, seed: u64) -> Self {
        Self {
            dt,
            n_steps,
            n_particles,
            seed,
            max_splits_per_step: DEFAULT_MAX_SPLITS,
            initial: InitialDistribution::AtVertex(VertexId(0)),
            workers: 0,
            outer_wall: None,
        }
    }

    pub fn with_initial(mut self, initial: InitialDistribution) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub states: Vec<ParticleState>,
    pub stats: BounceStats,
}

struct Plan<'a> {
    graph: &'a MetricGraph,
    field: &'a CoefficientField,
    config: &'a SimulationConfig,
    key: StreamKey,
    sqrt_dt: f64,
    wall: Option<f64>,
    gamma: f64,
}

fn plan<'a>(
    graph: &'a MetricGraph,
    field: &'a CoefficientField,
    config: &'a SimulationConfig,
) -> Result<Plan<'a>, EngineError> {
    let invalid = |msg: String| Err(EngineError::ConfigInvalid(msg));
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return invalid(format!("dt must be positive, got {}", config.dt));
    }
    if config.max_splits_per_step == 0 {
        return invalid("max_splits_per_step must be at least 1".into());
    }
    if field.drift_specs().len() != graph.edge_count() {
        return invalid("coefficient field does not match the graph".into());
    }
    let star = graph.is_star();
    if !star && !graph.all_edges_finite() {
        return Err(EngineError::UnsupportedTopology(
            "semi-infinite edges are only supported on star graphs".into(),
        ));
    }
    if let Some(w) = config.outer_wall {
        if !(w > 0.0 && w.is_finite()) {
            return invalid(format!("outer wall must be positive, got {w}"));
        }
    }
    match &config.initial {
        InitialDistribution::AtVertex(v) => {
            if v.0 >= graph.vertex_count()
                || graph.vertex_kind(*v) != VertexKind::Finite
                || graph.incidence(*v).degree() == 0
            {
                return invalid(format!("initial vertex {} is not a finite vertex", v.0));
            }
        }
        InitialDistribution::Point(e, x) => {
            if e.0 >= graph.edge_count() {
                return invalid(format!("initial edge {} does not exist", e.0));
            }
            if !(*x >= 0.0 && *x <= graph.length(*e)) || !x.is_finite() {
                return invalid(format!("initial position {x} is off edge {}", e.0));
            }
        }
        InitialDistribution::PerEdgeUniform(x_max) => {
            if x_max.is_nan() || *x_max <= 0.0 {
                return invalid(format!("x_max must be positive, got {x_max}"));
            }
            if x_max.is_infinite() && !graph.all_edges_finite() {
                return invalid("x_max must be finite on semi-infinite edges".into());
            }
        }
    }
    let mut gamma: f64 = 0.0;
    for v in graph.finite_vertices() {
        let g = field
            .gamma(graph, v, config.dt)
            .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
        gamma = gamma.max(g);
    }
    Ok(Plan {
        graph,
        field,
        config,
        key: StreamKey::new(config.seed),
        sqrt_dt: config.dt.sqrt(),
        wall: if star { config.outer_wall } else { None },
        gamma,
    })
}

fn initial_state(plan: &Plan<'_>, index: usize, rng: &mut RngStream) -> ParticleState {
    let graph = plan.graph;
    match &plan.config.initial {
        InitialDistribution::AtVertex(v) => {
            let inc = graph.incidence(*v);
            let e = inc.edges[0];
            ParticleState::new(e, graph.edge(e).end_position(inc.orientations[0]))
        }
        InitialDistribution::Point(e, x) => ParticleState::new(*e, *x),
        InitialDistribution::PerEdgeUniform(x_max) => {
            let e = EdgeId(index % graph.edge_count());
            let span = graph.length(e).min(*x_max);
            ParticleState::new(e, rng.uniform() * span)
        }
    }
}

fn simulate_chunk(plan: &Plan<'_>, start: usize, chunk: &mut [ParticleState]) -> BounceStats {
    let config = plan.config;
    let mut stats = BounceStats::new(config.max_splits_per_step, plan.gamma);
    for (k, slot) in chunk.iter_mut().enumerate() {
        let index = start + k;
        let mut rng = RngStream::from_key(&plan.key, index as u64);
        let mut state = initial_state(plan, index, &mut rng);
        for _ in 0..config.n_steps {
            let out = split_step(
                plan.graph,
                plan.field,
                state,
                config.dt,
                plan.sqrt_dt,
                &mut rng,
                config.max_splits_per_step,
                plan.wall,
            );
            stats.record(out.crossings, out.truncated);
            state = out.state;
        }
        *slot = state;
    }
    stats
}

fn merge(plan: &Plan<'_>, parts: Vec<BounceStats>) -> BounceStats {
    let mut total = BounceStats::new(plan.config.max_splits_per_step, plan.gamma);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Runs the ensemble on the calling thread.
pub fn run_ensemble_serial(
    graph: &MetricGraph,
    field: &CoefficientField,
    config: &SimulationConfig,
) -> Result<EnsembleResult, EngineError> {
    let plan = plan(graph, field, config)?;
    let mut states = vec![ParticleState::new(EdgeId(0), 0.0); config.n_particles];
    let parts: Vec<BounceStats> = states
        .chunks_mut(CHUNK)
        .enumerate()
        .map(|(c, chunk)| simulate_chunk(&plan, c * CHUNK, chunk))
        .collect();
    let stats = merge(&plan, parts);
    Ok(EnsembleResult { states, stats })
}

/// Runs the ensemble on `config.workers` threads. Results are bit-identical
/// to [`run_ensemble_serial`].
#[cfg(feature = "parallel")]
pub fn run_ensemble(
    graph: &MetricGraph,
    field: &CoefficientField,
    config: &SimulationConfig,
) -> Result<EnsembleResult, EngineError> {
    use rayon::prelude::*;

    let plan = plan(graph, field, config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let mut states = vec![ParticleState::new(EdgeId(0), 0.0); config.n_particles];
    let parts: Vec<BounceStats> = pool.install(|| {
        states
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, chunk)| simulate_chunk(&plan, c * CHUNK, chunk))
            .collect()
    });
    let stats = merge(&plan, parts);
    Ok(EnsembleResult { states, stats })
}

/// Sequential build: the worker count is ignored.
#[cfg(not(feature = "parallel"))]
pub fn run_ensemble(
    graph: &MetricGraph,
    field: &CoefficientField,
    config: &SimulationConfig,
) -> Result<EnsembleResult, EngineError> {
    run_ensemble_serial(graph, field, config)
}
