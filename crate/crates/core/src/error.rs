use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },

    #[error("invalid device `{id}`: {reason}")]
    InvalidDevice { id: String, reason: String },

    #[error("invalid fleet: {0}")]
    InvalidFleet(String),

    #[error("invalid demand profile: {0}")]
    InvalidDemand(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("efficiency {0} outside (0, 1]")]
    EfficiencyOutOfRange(f64),

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("event loop exceeded {limit} events at t = {time}")]
    EventLimit { limit: usize, time: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best_lambda: Vec<f64>,
    },

    #[error("{what} at t = {value} is not aligned to slot width {slot_width}")]
    Misaligned {
        what: &'static str,
        value: f64,
        slot_width: f64,
    },

    #[error("{slots} slots exceeds the enumeration cap of {cap}")]
    TooManySlots { slots: usize, cap: usize },

    #[error("time-to-failure iterates increased from {previous} to {next}")]
    NonMonotoneIterates { previous: f64, next: f64 },

    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),

    #[error("quantity {0} is not representable in the oracle's fixed-point scale")]
    Unrepresentable(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("schedule violates a constraint: {0}")]
    ScheduleViolation(String),

    #[error("scenario schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
