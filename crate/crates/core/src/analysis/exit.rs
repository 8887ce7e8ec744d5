//! Exit-edge frequencies after one step from a vertex, across a schedule of
//! timesteps. One step stands in for the first exit from a small ball.

use crate::coeffs::CoefficientField;
use crate::engine::{run_ensemble, EngineError, InitialDistribution, SimulationConfig};
use crate::graph::{MetricGraph, VertexId};

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRow {
    pub dt: f64,
    /// Per incidence slot of the vertex.
    pub frequencies: Vec<f64>,
    /// Binomial standard errors under the null `p = b_{v,i}`.
    pub std_errors: Vec<f64>,
    pub max_deviation: f64,
    /// Largest `|freq − b| / SE`; 0 for slots with zero variance and no deviation.
    pub max_z: f64,
    /// Particles that ended on an edge not incident to the vertex.
    pub elsewhere: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitReport {
    pub vertex: VertexId,
    pub weights: Vec<f64>,
    pub trials: usize,
    pub rows: Vec<ExitRow>,
}

impl ExitReport {
    /// Whether max deviation never grows as dt shrinks.
    pub fn deviation_nonincreasing(&self) -> bool {
        let mut rows: Vec<&ExitRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.dt.total_cmp(&a.dt));
        rows.windows(2).all(|w| w[1].max_deviation <= w[0].max_deviation)
    }
}

pub fn exit_probability_experiment(
    graph: &MetricGraph,
    field: &CoefficientField,
    vertex: VertexId,
    dt_schedule: &[f64],
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<ExitReport, EngineError> {
    if trials == 0 {
        return Err(EngineError::ConfigInvalid("trials must be positive".into()));
    }
    let inc = graph.incidence(vertex);
    let weights = inc.jump_weights.clone();
    let mut rows = Vec::with_capacity(dt_schedule.len());
    for &dt in dt_schedule {
        let config = SimulationConfig::new(dt, 1, trials, seed)
            .with_initial(InitialDistribution::AtVertex(vertex))
            .with_workers(workers);
        let out = run_ensemble(graph, field, &config)?;
        let mut counts = vec![0u64; weights.len()];
        let mut elsewhere = 0;
        for s in &out.states {
            match inc.slot_of(s.edge) {
                Some(slot) => counts[slot] += 1,
                None => elsewhere += 1,
            }
        }
        let n = trials as f64;
        let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let std_errors: Vec<f64> = weights.iter().map(|&b| (b * (1.0 - b) / n).sqrt()).collect();
        let mut max_deviation: f64 = 0.0;
        let mut max_z: f64 = 0.0;
        for ((f, b), se) in frequencies.iter().zip(&weights).zip(&std_errors) {
            let d = (f - b).abs();
            max_deviation = max_deviation.max(d);
            let z = if *se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_z = max_z.max(z);
        }
        rows.push(ExitRow {
            dt,
            frequencies,
            std_errors,
            max_deviation,
            max_z,
            elsewhere,
        });
    }
    Ok(ExitReport {
        vertex,
        weights,
        trials,
        rows,
    })
}
