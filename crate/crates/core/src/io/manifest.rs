//! Run configuration read from TOML. Command-line flags override fields.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EmStar,
    EmGeneral,
    Fvm,
    Compare,
    ExitProb,
    BounceStats,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub mode: Option<Mode>,
    pub graph: Option<PathBuf>,
    /// Several values only for `exit-prob`.
    pub dt: Option<Vec<f64>>,
    pub steps: Option<u64>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub cells: Option<usize>,
    /// Tail mass left outside truncated semi-infinite edges.
    pub truncation_tol: Option<f64>,
    pub force: Option<bool>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest: {0}")]
    Toml(String),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self, ManifestError> {
        let m: RunManifest = toml::from_str(text).map_err(|e| ManifestError::Toml(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Fields in `over` replace those in `self`.
    pub fn overlay(mut self, over: RunManifest) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            mode,
            graph,
            dt,
            steps,
            particles,
            seed,
            bins,
            workers,
            out,
            cells,
            truncation_tol,
            force
        );
        self
    }

    /// Range checks on every field that is present.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |field, reason: String| Err(ManifestError::Invalid { field, reason });
        if let Some(dts) = &self.dt {
            if dts.is_empty() {
                return invalid("dt", "no values".into());
            }
            if let Some(d) = dts.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                return invalid("dt", format!("{d} is not positive"));
            }
            if dts.len() > 1 && !matches!(self.mode, None | Some(Mode::ExitProb)) {
                return invalid("dt", "several values are only allowed for exit-prob".into());
            }
        }
        for (field, v) in [("bins", self.bins), ("cells", self.cells)] {
            if v == Some(0) {
                return invalid(field, "must be positive".into());
            }
        }
        if self.cells == Some(1) {
            return invalid("cells", "the finite-volume grid needs at least 2 cells per edge".into());
        }
        if let Some(t) = self.truncation_tol {
            if !(t > 0.0 && t < 1.0) {
                return invalid("truncation_tol", format!("{t} is not in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn require<T: Clone>(value: &Option<T>, name: &'static str) -> Result<T, ManifestError> {
        value.clone().ok_or(ManifestError::Missing(name))
    }

    /// The single timestep; errors when several are given.
    pub fn single_dt(&self) -> Result<Option<f64>, ManifestError> {
        match self.dt.as_deref() {
            None => Ok(None),
            Some([d]) => Ok(Some(*d)),
            Some(_) => Err(ManifestError::Invalid {
                field: "dt",
                reason: "expected a single value".into(),
            }),
        }
    }
}
