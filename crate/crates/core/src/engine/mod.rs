//! Timestep-splitting Euler-Maruyama integrator and the many-particle driver.

mod alpha;
mod ensemble;
pub mod rng;
mod step;

use thiserror::Error;

pub use alpha::solve_alpha;
pub use ensemble::{run_ensemble, run_ensemble_serial, EnsembleResult, InitialDistribution, SimulationConfig};
pub use rng::{RngStream, StreamKey};
pub use step::{em_step_general, em_step_star, ParticleState, StepOutcome, StepParams, DEFAULT_MAX_SPLITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no root of {a}·s² + {b}·s + {c} in [0, 1]: the step did not overshoot")]
    NoRootInUnitInterval { a: f64, b: f64, c: f64 },
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("unsupported graph: {0}")]
    UnsupportedTopology(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}
