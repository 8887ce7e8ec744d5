//! Brownian motion and Langevin diffusions on metric graphs.
//!
//! [`engine`] integrates particles with a timestep-splitting Euler-Maruyama
//! scheme that stays accurate across vertices, [`fvm`] solves the
//! Fokker-Planck equation with a finite-volume baseline, and [`analysis`]
//! compares both against analytic steady states.

pub mod analysis;
pub mod cli;
pub mod coeffs;
pub mod engine;
pub mod fvm;
pub mod graph;
pub mod grid;
pub mod io;
