//! Crossing-count statistics and the tail bound on `M`, the number of
//! vertex crossings within one timestep.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::AnalysisError;

/// Distribution of `M` over all steps that started at or hit a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BounceStats {
    /// `m_histogram[k]` counts steps with `M = k`; index 0 stays 0 and the
    /// last index is the splitting cap.
    pub m_histogram: Vec<u64>,
    pub gamma: f64,
    /// Steps that hit the cap and were cut short.
    pub truncations: u64,
}

impl BounceStats {
    pub fn new(cap: u32, gamma: f64) -> Self {
        Self {
            m_histogram: vec![0; cap as usize + 1],
            gamma,
            truncations: 0,
        }
    }

    /// `crossings == 0` means the step never touched a vertex.
    #[inline]
    pub fn record(&mut self, crossings: u32, truncated: bool) {
        if crossings > 0 {
            let k = crossings as usize;
            if k >= self.m_histogram.len() {
                self.m_histogram.resize(k + 1, 0);
            }
            self.m_histogram[k] += 1;
        }
        self.truncations += truncated as u64;
    }

    pub fn merge(&mut self, other: &BounceStats) {
        if other.m_histogram.len() > self.m_histogram.len() {
            self.m_histogram.resize(other.m_histogram.len(), 0);
        }
        for (a, b) in self.m_histogram.iter_mut().zip(&other.m_histogram) {
            *a += b;
        }
        self.truncations += other.truncations;
    }

    pub fn vertex_steps(&self) -> u64 {
        self.m_histogram.iter().sum()
    }

    pub fn total_crossings(&self) -> u64 {
        self.m_histogram.iter().enumerate().map(|(k, c)| k as u64 * c).sum()
    }

    /// Empirical `P(M ≤ k)`; `None` when no vertex steps were recorded.
    pub fn cdf(&self, k: usize) -> Option<f64> {
        let n = self.vertex_steps();
        if n == 0 {
            return None;
        }
        let upto: u64 = self.m_histogram.iter().take(k + 1).sum();
        Some(upto as f64 / n as f64)
    }

    pub fn max_observed(&self) -> usize {
        self.m_histogram.iter().rposition(|&c| c > 0).unwrap_or(0)
    }
}

/// `P(χ²_k ≥ γ)`.
pub fn chi2_survival(k: usize, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(k as f64).expect("k ≥ 1").sf(gamma)
}

/// `1 − exp(−(k−γ)²/(4k))` for `k > γ`; no bound otherwise.
pub fn crossing_lower_bound(k: usize, gamma: f64) -> Option<f64> {
    let kf = k as f64;
    (kf > gamma).then(|| 1.0 - (-(kf - gamma).powi(2) / (4.0 * kf)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingRow {
    pub k: usize,
    pub empirical: f64,
    pub bound: Option<f64>,
    /// Exact `P(χ²_k ≥ γ)`, reported for homogeneous drift only.
    pub chi2_tail: Option<f64>,
    pub bound_violated: bool,
    pub chi2_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingReport {
    pub gamma: f64,
    pub trials: u64,
    pub rows: Vec<CrossingRow>,
}

impl CrossingReport {
    pub fn violations(&self) -> impl Iterator<Item = &CrossingRow> {
        self.rows.iter().filter(|r| r.bound_violated)
    }

    pub fn chi2_mismatches(&self) -> impl Iterator<Item = &CrossingRow> {
        self.rows.iter().filter(|r| r.chi2_mismatch)
    }
}

/// Binomial standard error at probability `p` over `n` trials.
fn se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Compares the empirical CDF of `M` with the lower bound for `k = 1..=k_max`.
/// A row is flagged when the empirical value sits more than 3 standard
/// errors below the bound, or (homogeneous) more than 3 from the χ² tail.
pub fn check_crossing_bound(
    stats: &BounceStats,
    gamma: f64,
    k_max: usize,
    homogeneous: bool,
) -> Result<CrossingReport, AnalysisError> {
    let n = stats.vertex_steps();
    if n == 0 {
        return Err(AnalysisError::EmptyStats);
    }
    let rows = (1..=k_max)
        .map(|k| {
            let empirical = stats.cdf(k).expect("nonempty");
            let bound = crossing_lower_bound(k, gamma);
            let bound_violated = bound.is_some_and(|b| empirical < b - 3.0 * se(b, n) - 1e-12);
            let chi2_tail = homogeneous.then(|| chi2_survival(k, gamma));
            let chi2_mismatch = chi2_tail.is_some_and(|q| (empirical - q).abs() > 3.0 * se(q, n) + 1e-12);
            CrossingRow {
                k,
                empirical,
                bound,
                chi2_tail,
                bound_violated,
                chi2_mismatch,
            }
        })
        .collect();
    Ok(CrossingReport { gamma, trials: n, rows })
}
