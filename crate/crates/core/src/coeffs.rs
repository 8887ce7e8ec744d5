//! Per-edge drift and diffusion coefficients.

use thiserror::Error;

use crate::graph::{EdgeId, MetricGraph, Orientation, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("edge {edge}: cross-sectional area {area} is not positive")]
    NonPositiveArea { edge: usize, area: f64 },
    #[error("flux and area lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("coefficient field has {got} edges but the graph has {expected}")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("edge {edge}: diffusion coefficient {sigma} is not positive")]
    ZeroDiffusion { edge: usize, sigma: f64 },
    #[error("edge {edge}: tabulated drift {reason}")]
    BadTable { edge: usize, reason: String },
}

/// Drift `μ_e(x)` on one edge, `x` measured from the edge's init vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Constant(f64),
    /// `μ(x) = c·x`
    Linear(f64),
    /// Piecewise-linear through `(x, μ)` samples, clamped outside the range.
    Tabulated(Vec<(f64, f64)>),
}

impl DriftSpec {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Constant(c) => *c,
            DriftSpec::Linear(c) => c * x,
            DriftSpec::Tabulated(t) => interpolate(t, x),
        }
    }
}

fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let (x0, y0) = table[0];
    if x <= x0 {
        return y0;
    }
    let (xn, yn) = table[table.len() - 1];
    if x >= xn {
        return yn;
    }
    let hi = table.partition_point(|&(tx, _)| tx <= x);
    let (xa, ya) = table[hi - 1];
    let (xb, yb) = table[hi];
    ya + (yb - ya) * (x - xa) / (xb - xa)
}

/// Diffusion `σ_e(x)`. Only constants are implemented; `eval` takes `x` so
/// position-dependent variants can slot in behind the same call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionSpec {
    Constant(f64),
}

impl DiffusionSpec {
    #[inline]
    pub fn eval(&self, _x: f64) -> f64 {
        match self {
            DiffusionSpec::Constant(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    drift: Vec<DriftSpec>,
    diffusion: Vec<DiffusionSpec>,
}

impl CoefficientField {
    pub fn new(graph: &MetricGraph, drift: Vec<DriftSpec>, diffusion: Vec<DiffusionSpec>) -> Result<Self, CoeffError> {
        let expected = graph.edge_count();
        for got in [drift.len(), diffusion.len()] {
            if got != expected {
                return Err(CoeffError::EdgeCountMismatch { expected, got });
            }
        }
        for (e, d) in diffusion.iter().enumerate() {
            let DiffusionSpec::Constant(sigma) = *d;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(CoeffError::ZeroDiffusion { edge: e, sigma });
            }
        }
        for (e, d) in drift.iter().enumerate() {
            match d {
                DriftSpec::Tabulated(t) => check_table(e, t, graph.length(EdgeId(e)))?,
                DriftSpec::Constant(c) | DriftSpec::Linear(c) if !c.is_finite() => {
                    return Err(CoeffError::BadTable {
                        edge: e,
                        reason: format!("coefficient {c} is not finite"),
                    })
                }
                _ => {}
            }
        }
        Ok(Self { drift, diffusion })
    }

    /// Same drift and σ on every edge of `graph`.
    pub fn uniform(graph: &MetricGraph, drift: DriftSpec, sigma: f64) -> Result<Self, CoeffError> {
        let n = graph.edge_count();
        Self::new(graph, vec![drift; n], vec![DiffusionSpec::Constant(sigma); n])
    }

    pub fn drift_specs(&self) -> &[DriftSpec] {
        &self.drift
    }

    pub fn diffusion_specs(&self) -> &[DiffusionSpec] {
        &self.diffusion
    }

    #[inline]
    pub fn eval_drift(&self, e: EdgeId, x: f64) -> f64 {
        self.drift[e.0].eval(x)
    }

    #[inline]
    pub fn eval_diffusion(&self, e: EdgeId, x: f64) -> f64 {
        self.diffusion[e.0].eval(x)
    }

    /// Drift and σ at the given end of edge `e` (one-sided endpoint limits).
    pub fn at_end(&self, graph: &MetricGraph, e: EdgeId, end: Orientation) -> (f64, f64) {
        let x = graph.edge(e).end_position(end);
        (self.eval_drift(e, x), self.eval_diffusion(e, x))
    }

    /// `γ = dt · max_{e ∈ E(v)} μ_e(v)² / σ_e(v)²`.
    pub fn gamma(&self, graph: &MetricGraph, v: VertexId, dt: f64) -> Result<f64, CoeffError> {
        let inc = graph.incidence(v);
        let mut worst: f64 = 0.0;
        for (&e, &end) in inc.edges.iter().zip(&inc.orientations) {
            let (mu, sigma) = self.at_end(graph, e, end);
            if sigma.is_nan() || sigma <= 0.0 {
                return Err(CoeffError::ZeroDiffusion { edge: e.0, sigma });
            }
            worst = worst.max(mu * mu / (sigma * sigma));
        }
        Ok(dt * worst)
    }
}

fn check_table(edge: usize, t: &[(f64, f64)], length: f64) -> Result<(), CoeffError> {
    let bad = |reason: String| Err(CoeffError::BadTable { edge, reason });
    if t.is_empty() {
        return bad("has no samples".into());
    }
    if t.windows(2).any(|w| w[1].0 <= w[0].0) {
        return bad("sample positions are not strictly increasing".into());
    }
    if t.iter().any(|&(x, m)| !x.is_finite() || !m.is_finite()) {
        return bad("contains a non-finite sample".into());
    }
    if t[0].0 < 0.0 || t[t.len() - 1].0 > length {
        return bad(format!("samples leave the edge interval [0, {length}]"));
    }
    Ok(())
}

/// Constant drift `Q_e / A_e` per edge from precomputed volume fluxes and
/// cross-sectional areas, signed along the init→term orientation.
pub fn drift_from_flux(flux: &[f64], area: &[f64]) -> Result<Vec<DriftSpec>, CoeffError> {
    if flux.len() != area.len() {
        return Err(CoeffError::LengthMismatch(flux.len(), area.len()));
    }
    flux.iter()
        .zip(area)
        .enumerate()
        .map(|(e, (&q, &a))| {
            if a > 0.0 {
                Ok(DriftSpec::Constant(q / a))
            } else {
                Err(CoeffError::NonPositiveArea { edge: e, area: a })
            }
        })
        .collect()
}
