//! Simulation and analysis of electron-shelving readout for ¹⁷¹Yb⁺ hyperfine qubits.
//!
//! The ion is modeled as a continuous-time Markov chain over seven manifolds.
//! Populations are propagated either deterministically ([`dynamics::evolve_ode`])
//! or by sampled quantum-jump trajectories ([`dynamics::sample_trajectory`]),
//! and full SPAM campaigns are assembled from those pieces in [`protocol`].

pub mod analysis;
pub mod atomic;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod photon;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
