//! Simulation of a Bragg-outcoupled atom laser that is focused by a
//! far-detuned optical potential.
//!
//! The condensate and the outcoupled beam are two coupled Gross-Pitaevskii
//! fields on a shared spectral grid. Around that solver sit the closed-form
//! Bragg and lens relations, a classical ray model for calibrating the lens,
//! beam diagnostics, and a config-driven runner.

pub mod bragg;
pub mod classical;
pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod field;
pub mod params;
pub mod potentials;
pub mod runner;
pub mod snapshot;

pub use error::{Error, Result};
