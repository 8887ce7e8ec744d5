//! Stationary densities on a star with semi-infinite edges.
//!
//! Linear potential (drift `−μ_i`): `ρ_i(x) = B·exp(−(μ_i/D)·x)`.
//! Quadratic potential (drift `−μ_i·x`): `ρ_i(x) = B·exp(−(μ_i/2D)·x²)`.
//! One `B` on all edges (continuity at the vertex), `D = σ²/2`.

use statrs::function::erf::erfc;

use crate::coeffs::{CoefficientField, DiffusionSpec, DriftSpec};
use crate::graph::{EdgeId, MetricGraph};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    Linear,
    Quadratic,
}

/// Normalizer values from the three available routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizerCheck {
    pub quadrature: f64,
    pub closed_form: f64,
    /// The linear-case formula as printed, `D / Σ 1/μ_i`. It does not
    /// normalize the density and is reported for comparison only.
    pub printed_linear: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOracle {
    kind: Potential,
    rates: Vec<f64>,
    diffusion: f64,
    normalizer: f64,
    check: NormalizerCheck,
}

/// Decay scale per edge; the unnormalized density is below `e^-60` past
/// `QUAD_SCALES` of these.
fn decay_scale(kind: Potential, rate: f64, d: f64) -> f64 {
    match kind {
        Potential::Linear => d / rate,
        Potential::Quadratic => (2.0 * d / rate).sqrt(),
    }
}

const QUAD_SCALES: f64 = 60.0;

fn shape(kind: Potential, rate: f64, d: f64, x: f64) -> f64 {
    match kind {
        Potential::Linear => (-(rate / d) * x).exp(),
        Potential::Quadratic => (-(rate / (2.0 * d)) * x * x).exp(),
    }
}

fn integrate_shape(kind: Potential, rate: f64, d: f64) -> f64 {
    let scale = decay_scale(kind, rate, d);
    let upper = match kind {
        Potential::Linear => QUAD_SCALES * scale,
        Potential::Quadratic => QUAD_SCALES.sqrt() * scale,
    };
    // Split so the double-exponential rule sees the bulk at full resolution.
    let mut total = 0.0;
    let mut a = 0.0;
    for b in [scale, 4.0 * scale, upper] {
        total += quadrature::double_exponential::integrate(|x| shape(kind, rate, d, x), a, b, 1e-14).integral;
        a = b;
    }
    total
}

impl SteadyStateOracle {
    /// `rates` are the positive `μ_i`, `sigma` the common diffusion coefficient.
    pub fn new(kind: Potential, rates: Vec<f64>, sigma: f64) -> Result<Self, AnalysisError> {
        if rates.is_empty() {
            return Err(AnalysisError::BadOracle("no edges".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(AnalysisError::BadOracle(format!("rate {r} must be positive")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(AnalysisError::BadOracle(format!("sigma {sigma} must be positive")));
        }
        let d = 0.5 * sigma * sigma;
        let mass: f64 = rates.iter().map(|&r| integrate_shape(kind, r, d)).sum();
        let quadrature = 1.0 / mass;
        let (closed_form, printed_linear) = match kind {
            Potential::Linear => {
                let s: f64 = rates.iter().map(|r| 1.0 / r).sum();
                (1.0 / (d * s), Some(d / s))
            }
            Potential::Quadratic => {
                let s: f64 = rates.iter().map(|r| 1.0 / r.sqrt()).sum();
                ((2.0 / (d * std::f64::consts::PI)).sqrt() / s, None)
            }
        };
        Ok(Self {
            kind,
            rates,
            diffusion: d,
            normalizer: quadrature,
            check: NormalizerCheck {
                quadrature,
                closed_form,
                printed_linear,
            },
        })
    }

    /// Recognizes a star whose edges all carry `Constant(−μ_i)` (linear) or
    /// all `Linear(−μ_i)` (quadratic) drift with one common σ.
    pub fn from_star(graph: &MetricGraph, field: &CoefficientField) -> Result<Self, AnalysisError> {
        if !graph.is_star() {
            return Err(AnalysisError::BadOracle("graph is not a star".into()));
        }
        let sigmas: Vec<f64> = field
            .diffusion_specs()
            .iter()
            .map(|s| match s {
                DiffusionSpec::Constant(v) => *v,
            })
            .collect();
        if sigmas.iter().any(|s| *s != sigmas[0]) {
            return Err(AnalysisError::BadOracle("sigma differs between edges".into()));
        }
        let mut kind = None;
        let mut rates = Vec::with_capacity(sigmas.len());
        for spec in field.drift_specs() {
            let (k, c) = match spec {
                DriftSpec::Constant(c) => (Potential::Linear, *c),
                DriftSpec::Linear(c) => (Potential::Quadratic, *c),
                DriftSpec::Tabulated(_) => {
                    return Err(AnalysisError::BadOracle("tabulated drift has no closed form".into()))
                }
            };
            if kind.is_some_and(|prev| prev != k) {
                return Err(AnalysisError::BadOracle("mixed drift kinds".into()));
            }
            kind = Some(k);
            rates.push(-c);
        }
        Self::new(kind.expect("star has edges"), rates, sigmas[0])
    }

    pub fn kind(&self) -> Potential {
        self.kind
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn edge_count(&self) -> usize {
        self.rates.len()
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn self_check(&self) -> NormalizerCheck {
        self.check
    }

    pub fn density(&self, e: EdgeId, x: f64) -> f64 {
        self.normalizer * shape(self.kind, self.rates[e.0], self.diffusion, x)
    }

    /// Mass of edge `e` beyond `x`, in closed form.
    pub fn tail_mass(&self, e: EdgeId, x: f64) -> f64 {
        let (r, d, b) = (self.rates[e.0], self.diffusion, self.normalizer);
        match self.kind {
            Potential::Linear => b * (d / r) * (-(r / d) * x).exp(),
            Potential::Quadratic => {
                let k = r / (2.0 * d);
                b * 0.5 * (std::f64::consts::PI / k).sqrt() * erfc(k.sqrt() * x)
            }
        }
    }

    /// Smallest `L` (to bisection precision) with `tail_mass(e, L) ≤ tol`.
    pub fn truncation_length(&self, e: EdgeId, tol: f64) -> f64 {
        if self.tail_mass(e, 0.0) <= tol {
            return 0.0;
        }
        let (r, d) = (self.rates[e.0], self.diffusion);
        if self.kind == Potential::Linear {
            let b = self.normalizer;
            return (d / r) * (b * d / (r * tol)).ln();
        }
        let mut hi = decay_scale(self.kind, r, d);
        while self.tail_mass(e, hi) > tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(e, mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }
}
