//! Hybrid particle swarm optimization with a survivability-gated retry loop,
//! built around area-minimal sizing of a two-stage Miller-compensated op-amp.
//!
//! The crate splits into four parts:
//!
//! - [`pso`]: the swarm engine. Infeasible particles get repeated
//!   velocity/position updates before being replaced, instead of being
//!   regenerated immediately as in standard PSO.
//! - [`opamp`]: the circuit problem. An analytical square-law evaluator
//!   computes gain, bandwidth, phase margin, slew rate, power, noise, and
//!   per-transistor saturation at the common-mode range endpoints.
//! - [`spice`]: an optional external-simulator backend that emits a netlist,
//!   runs a SPICE binary in batch mode, and parses measured metrics into the
//!   same report type.
//! - [`bench`]: synthetic constrained problems and hybrid-vs-standard
//!   comparison statistics.
//!
//! All runs are deterministic for a fixed seed: each particle owns an RNG
//! substream derived from `(seed, iteration, particle index)`, so parallel
//! and sequential evaluation produce bit-identical results.

pub mod bench;
pub mod error;
pub mod opamp;
pub mod problem;
pub mod pso;
pub mod spice;

pub use error::{ConfigError, PsoError};
pub use problem::{Bounds, Problem, Survival};
pub use pso::{
    optimize, optimize_standard, EvalMode, IterationRecord, Particle, PsoConfig, RunResult,
};
