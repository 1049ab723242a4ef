use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigensolver did not converge on block {block} after {sweeps} sweeps")]
    EigenNoConvergence { block: usize, sweeps: usize },

    #[error("invalid cone block: {0}")]
    InvalidBlock(String),

    #[error("point is not in the cone on block {block} (violation {violation:.3e})")]
    Infeasible { block: usize, violation: f64 },

    #[error("multiplier is not normal to the cone on block {block} (residual {residual:.3e})")]
    NotNormal { block: usize, residual: f64 },

    #[error("direction is outside the critical cone (distance {distance:.3e})")]
    NotCritical { distance: f64 },

    #[error(
        "graphical-derivative characterizations disagree: projection route says {projection_route}, \
         facial route says {facial_route}"
    )]
    CharacterizationMismatch {
        projection_route: bool,
        facial_route: bool,
    },

    #[error("not a KKT point: stationarity residual {r1:.3e}, cone residual {r2:.3e} (tolerance {tol:.1e})")]
    NotKkt { r1: f64, r2: f64, tol: f64 },

    #[error("derivative self-check failed: max relative error {max_rel_error:.3e} in {component}")]
    SelfCheck {
        component: String,
        max_rel_error: f64,
    },

    #[error("Dykstra projection did not converge in {iterations} iterations (last gap {gap:.3e})")]
    DykstraNoConvergence { iterations: usize, gap: f64 },

    #[error("face enumeration requires a polyhedral cone (block {block} is {kind})")]
    NotPolyhedral { block: usize, kind: &'static str },

    #[error("perturbed KKT solver failed after {iterations} iterations: {reason} (residual {residual:.3e})")]
    SolverFailed {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("routes disagree in {0}")]
    Inconsistent(String),

    #[error("problem file: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
