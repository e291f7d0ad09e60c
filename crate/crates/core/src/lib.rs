//! Simulation of decoherence in adiabatic and non-adiabatic geometric phase
//! gates by quantum state diffusion.
//!
//! - [`qcore`]: dense 2×2 / 4×4 complex linear algebra
//! - [`schedule`]: pulse sequences and rotating-frame Hamiltonians
//! - [`qsd`]: stochastic trajectory integrator and ensembles
//! - [`oracle`]: deterministic master-equation integrator
//! - [`metrics`]: fidelity, entropy, concurrence, tomography, thresholds
//! - [`experiments`]: named sweeps and their analysis
//! - [`cli`]: command-line front end

pub mod cli;
pub mod experiments;
pub mod metrics;
pub mod oracle;
pub mod qcore;
pub mod qsd;
pub mod schedule;
