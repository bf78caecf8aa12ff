//! Synthesis of state-feedback controllers directly from noisy input/state
//! data, with independent model-based and sampling verification.
//!
//! The pipeline: measured trajectories ([`data`]) plus a quadratic noise
//! bound ([`noise`]) determine the set of systems consistent with the data
//! as a quadratic matrix inequality ([`consistency`]). A multiplier search
//! ([`slemma`]) turns "one QMI implies another" into a single linear matrix
//! inequality, and [`synth`] assembles and solves the resulting LMIs for
//! stabilizing, H2-optimal and Hinf-optimal gains via the conic layer
//! ([`sdp`]). [`verify`] provides the independent oracles (spectral radius,
//! Lyapunov and gramian equations, norm computations, Monte Carlo sweeps
//! over the consistency set) used to validate every synthesized controller.

pub mod consistency;
pub mod data;
pub mod error;
pub mod io;
pub mod noise;
pub mod sdp;
pub mod slemma;
pub mod symmat;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use symmat::{Definiteness, SymMatrix, Tolerance};
