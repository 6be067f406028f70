use thiserror::Error;

/// Engine-level failures.
#[derive(Debug, Error)]
pub enum PsoError {
    /// The particle generation function gave up after the configured number
    /// of consecutive survivability failures. Signals an infeasible or
    /// near-infeasible constraint set. Carries the gbest history of any
    /// iterations that completed before the abort.
    #[error("particle generation exhausted after {attempts} attempts")]
    GenerationExhausted {
        attempts: usize,
        partial_history: Vec<f64>,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A configuration field violated its invariant; names the field.
#[derive(Debug, Error)]
#[error("invalid configuration: {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Failures of the analytical circuit solver. A failing particle is an
/// expected outcome, so `evaluate` converts these into named violations
/// rather than propagating them.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    /// Bisection could not bracket a root within the supply rails.
    #[error("no-convergence: {0}")]
    NoConvergence(&'static str),
    /// A device required to conduct has V_GS below threshold.
    #[error("cutoff: {0}")]
    Cutoff(&'static str),
    /// Phase margin came out non-positive.
    #[error("unstable: phase margin {0} deg")]
    Unstable(f64),
}

/// SPICE backend failures.
#[derive(Debug, Error)]
pub enum SpiceError {
    #[error("template error: unresolved placeholder `{0}`")]
    UnresolvedPlaceholder(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("simulation timeout after {0} s")]
    Timeout(f64),
    #[error("simulation failed (exit status {status}):\n{output}")]
    SimulationFailed { status: i32, output: String },
    #[error("parse error: {0}")]
    ParseError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
