//! Metric graphs: oriented edges with lengths, glued at vertices that carry
//! vertex-edge jump distributions.
//!
//! Positions on an edge are always measured from its `init` vertex, so a
//! particle on edge `e` lives in `[0, length(e)]`. Semi-infinite edges have an
//! infinite length and end at a sentinel "vertex at infinity" that carries no
//! jump distribution and can never be hit.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Tolerance on `Σ b_ve = 1` accepted when building a graph. Weights whose
/// sum is off by more than summation rounding are renormalised; the stored
/// weights are a fixed point, so rebuilding from them changes no bits.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Which end of an edge touches a given vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    AtInit,
    AtTerm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub init: VertexId,
    pub term: VertexId,
    pub length: f64,
}

impl Edge {
    pub fn is_finite(&self) -> bool {
        self.length.is_finite()
    }

    /// Position of the given end in edge coordinates.
    #[inline]
    pub fn end_position(&self, end: Orientation) -> f64 {
        match end {
            Orientation::AtInit => 0.0,
            Orientation::AtTerm => self.length,
        }
    }

    #[inline]
    pub fn endpoint(&self, end: Orientation) -> VertexId {
        match end {
            Orientation::AtInit => self.init,
            Orientation::AtTerm => self.term,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Finite,
    /// Terminal sentinel of one or more semi-infinite edges.
    AtInfinity,
}

/// Incident edges of one vertex with their orientations and jump weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexIncidence {
    pub edges: Vec<EdgeId>,
    pub orientations: Vec<Orientation>,
    pub jump_weights: Vec<f64>,
    pub cum_weights: Vec<f64>,
}

impl VertexIncidence {
    fn empty() -> Self {
        Self {
            edges: Vec::new(),
            orientations: Vec::new(),
            jump_weights: Vec::new(),
            cum_weights: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.edges.len()
    }

    /// Slot index of `edge` in this incidence list.
    pub fn slot_of(&self, edge: EdgeId) -> Option<usize> {
        self.edges.iter().position(|&e| e == edge)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no edges")]
    Empty,
    #[error("edge {edge} has non-positive or invalid length {length}")]
    NonPositiveLength { edge: usize, length: f64 },
    #[error("edge {edge} is a self-loop at vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("jump weights at vertex {vertex} violate the simplex condition: {reason}")]
    WeightSimplexViolation { vertex: usize, reason: String },
    #[error("dangling reference: {0}")]
    DanglingVertexReference(String),
    #[error("graph is disconnected: vertex {0} is unreachable from vertex {1}")]
    DisconnectedGraph(usize, usize),
    #[error("vertex {0} is both a finite vertex and the sentinel end of a semi-infinite edge")]
    SentinelConflict(usize),
    #[error("cannot sample an exit edge at vertex {0}: it is a vertex at infinity")]
    InfinityVertex(usize),
    #[error("cannot sample an exit edge at vertex {0}: it has no incident edges")]
    IsolatedVertex(usize),
}

/// Per-vertex jump weights keyed by incident edge. Vertices absent from the
/// map receive the uniform distribution `1/deg(v)`.
pub type JumpWeights = BTreeMap<VertexId, Vec<(EdgeId, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    edges: Vec<Edge>,
    kinds: Vec<VertexKind>,
    incidence: Vec<VertexIncidence>,
    is_star: bool,
}

impl MetricGraph {
    /// Validates the edge list and weights and builds the incidence structure.
    pub fn build(edges: &[Edge], weights: &JumpWeights) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::Empty);
        }
        let n_vertices = edges.iter().map(|e| e.init.0.max(e.term.0) + 1).max().unwrap_or(0);

        let mut kinds = vec![None; n_vertices];
        for (i, e) in edges.iter().enumerate() {
            if e.length.is_nan() || e.length <= 0.0 {
                return Err(GraphError::NonPositiveLength {
                    edge: i,
                    length: e.length,
                });
            }
            if e.init == e.term {
                return Err(GraphError::SelfLoop {
                    edge: i,
                    vertex: e.init.0,
                });
            }
            let term_kind = if e.is_finite() {
                VertexKind::Finite
            } else {
                VertexKind::AtInfinity
            };
            for (v, kind) in [(e.init, VertexKind::Finite), (e.term, term_kind)] {
                match kinds[v.0] {
                    None => kinds[v.0] = Some(kind),
                    Some(k) if k == kind => {}
                    Some(_) => return Err(GraphError::SentinelConflict(v.0)),
                }
            }
        }

        // ids skipped by the edge list are isolated finite vertices
        let kinds: Vec<VertexKind> = kinds.into_iter().map(|k| k.unwrap_or(VertexKind::Finite)).collect();

        let mut incidence = vec![VertexIncidence::empty(); n_vertices];
        for (i, e) in edges.iter().enumerate() {
            incidence[e.init.0].edges.push(EdgeId(i));
            incidence[e.init.0].orientations.push(Orientation::AtInit);
            if e.is_finite() {
                incidence[e.term.0].edges.push(EdgeId(i));
                incidence[e.term.0].orientations.push(Orientation::AtTerm);
            }
        }

        for (v, w) in weights {
            if v.0 >= n_vertices {
                return Err(GraphError::DanglingVertexReference(format!(
                    "weights given for vertex {} but the graph has {} vertices",
                    v.0, n_vertices
                )));
            }
            if kinds[v.0] == VertexKind::AtInfinity {
                return Err(GraphError::DanglingVertexReference(format!(
                    "weights given for vertex {} which is a vertex at infinity",
                    v.0
                )));
            }
            for (e, _) in w {
                if incidence[v.0].slot_of(*e).is_none() {
                    return Err(GraphError::DanglingVertexReference(format!(
                        "weight for edge {} at vertex {} but the edge is not incident",
                        e.0, v.0
                    )));
                }
            }
        }

        for (v, inc) in incidence.iter_mut().enumerate() {
            if kinds[v] == VertexKind::AtInfinity || inc.degree() == 0 {
                continue;
            }
            let deg = inc.degree();
            let raw: Vec<f64> = match weights.get(&VertexId(v)) {
                None => vec![1.0 / deg as f64; deg],
                Some(given) => {
                    let mut raw = vec![f64::NAN; deg];
                    for &(e, b) in given {
                        let slot = inc.slot_of(e).expect("checked above");
                        if !raw[slot].is_nan() {
                            return Err(GraphError::WeightSimplexViolation {
                                vertex: v,
                                reason: format!("edge {} listed twice", e.0),
                            });
                        }
                        raw[slot] = b;
                    }
                    if let Some(slot) = raw.iter().position(|b| b.is_nan()) {
                        return Err(GraphError::WeightSimplexViolation {
                            vertex: v,
                            reason: format!("no weight for incident edge {}", inc.edges[slot].0),
                        });
                    }
                    raw
                }
            };
            if let Some(b) = raw.iter().find(|b| !(0.0..=1.0).contains(*b)) {
                return Err(GraphError::WeightSimplexViolation {
                    vertex: v,
                    reason: format!("weight {b} outside [0, 1]"),
                });
            }
            let sum: f64 = raw.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(GraphError::WeightSimplexViolation {
                    vertex: v,
                    reason: format!("weights sum to {sum}"),
                });
            }
            let rounding = raw.len() as f64 * f64::EPSILON;
            inc.jump_weights = if (sum - 1.0).abs() <= rounding {
                raw
            } else {
                raw.iter().map(|b| b / sum).collect()
            };
            let mut acc = 0.0;
            inc.cum_weights = inc
                .jump_weights
                .iter()
                .map(|b| {
                    acc += b;
                    acc
                })
                .collect();
            *inc.cum_weights.last_mut().expect("degree >= 1") = 1.0;
        }

        check_connected(edges, &kinds, &incidence)?;

        let finite: Vec<usize> = (0..n_vertices).filter(|&v| kinds[v] == VertexKind::Finite).collect();
        let is_star = finite.len() == 1 && edges.iter().all(|e| !e.is_finite() && e.init.0 == finite[0]);

        Ok(Self {
            edges: edges.to_vec(),
            kinds,
            incidence,
            is_star,
        })
    }

    /// Star graph with `n` semi-infinite edges leaving vertex 0, all ending at
    /// the shared sentinel vertex 1.
    pub fn star(n: usize, weights: Option<&[f64]>) -> Result<Self, GraphError> {
        let edges: Vec<Edge> = (0..n)
            .map(|_| Edge {
                init: VertexId(0),
                term: VertexId(1),
                length: f64::INFINITY,
            })
            .collect();
        let mut w = JumpWeights::new();
        if let Some(b) = weights {
            w.insert(
                VertexId(0),
                b.iter().enumerate().map(|(i, &x)| (EdgeId(i), x)).collect(),
            );
        }
        Self::build(&edges, &w)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.kinds.len()
    }

    #[inline]
    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    #[inline]
    pub fn length(&self, e: EdgeId) -> f64 {
        self.edges[e.0].length
    }

    pub fn vertex_kind(&self, v: VertexId) -> VertexKind {
        self.kinds[v.0]
    }

    pub fn incidence(&self, v: VertexId) -> &VertexIncidence {
        &self.incidence[v.0]
    }

    pub fn is_star(&self) -> bool {
        self.is_star
    }

    pub fn all_edges_finite(&self) -> bool {
        self.edges.iter().all(Edge::is_finite)
    }

    /// Finite vertices with at least one incident edge.
    pub fn finite_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.kinds.len())
            .filter(|&v| self.kinds[v] == VertexKind::Finite && self.incidence[v].degree() > 0)
            .map(VertexId)
    }

    /// The unique finite vertex of a star graph.
    pub fn star_center(&self) -> Option<VertexId> {
        if self.is_star {
            Some(self.edges[0].init)
        } else {
            None
        }
    }

    /// Samples the exit slot at `v` from a uniform draw `u ∈ [0, 1)`: the first
    /// slot with positive weight and `u <= cum_weights[slot]`.
    pub fn sample_exit_edge(&self, v: VertexId, u: f64) -> Result<(EdgeId, Orientation), GraphError> {
        if self.kinds[v.0] == VertexKind::AtInfinity {
            return Err(GraphError::InfinityVertex(v.0));
        }
        let inc = &self.incidence[v.0];
        if inc.degree() == 0 {
            return Err(GraphError::IsolatedVertex(v.0));
        }
        let slot = sample_slot(inc, u);
        Ok((inc.edges[slot], inc.orientations[slot]))
    }

    /// Unchecked slot sampling for the stepping hot loop.
    #[inline]
    pub(crate) fn sample_slot_unchecked(&self, v: VertexId, u: f64) -> (EdgeId, Orientation) {
        let inc = &self.incidence[v.0];
        let slot = sample_slot(inc, u);
        (inc.edges[slot], inc.orientations[slot])
    }
}

#[inline]
fn sample_slot(inc: &VertexIncidence, u: f64) -> usize {
    let last = inc.cum_weights.len() - 1;
    for (j, (&c, &b)) in inc.cum_weights.iter().zip(&inc.jump_weights).enumerate() {
        if u <= c && b > 0.0 {
            return j;
        }
    }
    last
}

fn check_connected(edges: &[Edge], kinds: &[VertexKind], incidence: &[VertexIncidence]) -> Result<(), GraphError> {
    let finite: Vec<usize> = (0..kinds.len()).filter(|&v| kinds[v] == VertexKind::Finite).collect();
    let Some(&root) = finite.first() else {
        return Ok(());
    };
    let mut seen = vec![false; kinds.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &e in &incidence[v].edges {
            let edge = &edges[e.0];
            if !edge.is_finite() {
                continue;
            }
            let other = if edge.init.0 == v { edge.term.0 } else { edge.init.0 };
            if !seen[other] {
                seen[other] = true;
                queue.push_back(other);
            }
        }
    }
    match finite.iter().find(|&&v| !seen[v]) {
        Some(&v) => Err(GraphError::DisconnectedGraph(v, root)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(init: usize, term: usize, length: f64) -> Edge {
        Edge {
            init: VertexId(init),
            term: VertexId(term),
            length,
        }
    }

    #[test]
    fn uniform_star_is_star() {
        let g = MetricGraph::star(5, Some(&[0.2; 5])).unwrap();
        assert!(g.is_star());
        assert_eq!(g.star_center(), Some(VertexId(0)));
        let inc = g.incidence(VertexId(0));
        assert_eq!(inc.degree(), 5);
        assert!(inc.orientations.iter().all(|&o| o == Orientation::AtInit));
        assert_eq!(g.vertex_kind(VertexId(1)), VertexKind::AtInfinity);
        assert_eq!(g.incidence(VertexId(1)).degree(), 0);
    }

    #[test]
    fn degree_one_vertices_get_unit_weight() {
        let g = MetricGraph::build(&[seg(0, 1, 1.0)], &JumpWeights::new()).unwrap();
        for v in 0..2 {
            let inc = g.incidence(VertexId(v));
            assert_eq!(inc.jump_weights, vec![1.0]);
            assert_eq!(inc.cum_weights, vec![1.0]);
        }
        assert!(!g.is_star());
        assert_eq!(g.incidence(VertexId(1)).orientations, vec![Orientation::AtTerm]);
    }

    #[test]
    fn simplex_violation() {
        let mut w = JumpWeights::new();
        w.insert(VertexId(1), vec![(EdgeId(0), 0.5), (EdgeId(1), 0.6)]);
        let err = MetricGraph::build(&[seg(0, 1, 1.0), seg(1, 2, 1.0)], &w).unwrap_err();
        assert!(matches!(err, GraphError::WeightSimplexViolation { vertex: 1, .. }));
    }

    #[test]
    fn build_errors() {
        let w = JumpWeights::new();
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, 0.0)], &w),
            Err(GraphError::NonPositiveLength { .. })
        ));
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, -2.0)], &w),
            Err(GraphError::NonPositiveLength { .. })
        ));
        assert!(matches!(
            MetricGraph::build(&[seg(1, 1, 1.0)], &w),
            Err(GraphError::SelfLoop { .. })
        ));
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, 1.0), seg(2, 3, 1.0)], &w),
            Err(GraphError::DisconnectedGraph(..))
        ));
        // vertex 1 skipped by the edge list
        assert!(matches!(
            MetricGraph::build(&[seg(0, 2, 1.0)], &w),
            Err(GraphError::DisconnectedGraph(1, 0))
        ));
        let mut bad = JumpWeights::new();
        bad.insert(VertexId(7), vec![(EdgeId(0), 1.0)]);
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, 1.0)], &bad),
            Err(GraphError::DanglingVertexReference(_))
        ));
        let mut bad = JumpWeights::new();
        bad.insert(VertexId(0), vec![(EdgeId(1), 1.0)]);
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, 1.0), seg(1, 2, 1.0)], &bad),
            Err(GraphError::DanglingVertexReference(_))
        ));
    }

    #[test]
    fn sentinel_rules() {
        let w = JumpWeights::new();
        // vertex 1 is the sentinel of edge 0 and a finite endpoint of edge 1
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, f64::INFINITY), seg(1, 2, 1.0)], &w),
            Err(GraphError::SentinelConflict(1))
        ));
        let mut at_inf = JumpWeights::new();
        at_inf.insert(VertexId(1), vec![(EdgeId(0), 1.0)]);
        assert!(matches!(
            MetricGraph::build(&[seg(0, 1, f64::INFINITY)], &at_inf),
            Err(GraphError::DanglingVertexReference(_))
        ));
        let g = MetricGraph::star(3, None).unwrap();
        assert_eq!(g.sample_exit_edge(VertexId(1), 0.5), Err(GraphError::InfinityVertex(1)));
    }

    #[test]
    fn sample_exit_edge_examples() {
        let g = MetricGraph::star(5, None).unwrap();
        assert_eq!(
            g.sample_exit_edge(VertexId(0), 0.55).unwrap(),
            (EdgeId(2), Orientation::AtInit)
        );

        let single = MetricGraph::build(&[seg(0, 1, 1.0)], &JumpWeights::new()).unwrap();
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(
                single.sample_exit_edge(VertexId(1), u).unwrap(),
                (EdgeId(0), Orientation::AtTerm)
            );
        }
    }

    /// Boundary behaviour checked against a linear scan over the raw
    /// (non-cumulative) weights.
    #[test]
    fn sample_exit_edge_boundary_matches_linear_scan() {
        let weights = [0.1, 0.9];
        let g = MetricGraph::star(2, Some(&weights)).unwrap();
        let scan = |u: f64| {
            let mut rem = u;
            for (j, &b) in weights.iter().enumerate() {
                if rem <= b {
                    return j;
                }
                rem -= b;
            }
            weights.len() - 1
        };
        for u in [0.1 - 1e-12, 0.1 + 1e-12, 0.0, 0.05, 0.5, 0.999] {
            let (e, _) = g.sample_exit_edge(VertexId(0), u).unwrap();
            assert_eq!(e.0, scan(u), "u = {u}");
        }
        assert_eq!(g.sample_exit_edge(VertexId(0), 0.1 - 1e-12).unwrap().0, EdgeId(0));
        assert_eq!(g.sample_exit_edge(VertexId(0), 0.1 + 1e-12).unwrap().0, EdgeId(1));
    }

    #[test]
    fn degenerate_simplex_never_picks_zero_weight() {
        let g = MetricGraph::star(3, Some(&[0.0, 1.0, 0.0])).unwrap();
        for u in [0.0, 1e-300, 0.5, 0.999_999_999] {
            assert_eq!(g.sample_exit_edge(VertexId(0), u).unwrap().0, EdgeId(1));
        }
    }

    #[test]
    fn empirical_exit_frequencies() {
        use rand_chacha::rand_core::{RngCore, SeedableRng};
        let weights = [0.05, 0.15, 0.3, 0.5];
        let g = MetricGraph::star(4, Some(&weights)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            counts[g.sample_exit_edge(VertexId(0), u).unwrap().0 .0] += 1;
        }
        for (c, b) in counts.iter().zip(weights) {
            let sd = (n as f64 * b * (1.0 - b)).sqrt();
            assert!((*c as f64 - n as f64 * b).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn cumulative_weights_are_exact() {
        let g = MetricGraph::star(3, Some(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])).unwrap();
        let inc = g.incidence(VertexId(0));
        assert_eq!(*inc.cum_weights.last().unwrap(), 1.0);
        assert!(inc.cum_weights.windows(2).all(|w| w[0] <= w[1]));
        assert!((inc.jump_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
