use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("position {x} outside non-periodic grid [{x_min}, {x_max}]")]
    OutOfDomain { x: f64, x_min: f64, x_max: f64 },

    #[error("negative density {value:e} at node {node} (tolerance {tol:e})")]
    NegativeDensity { value: f64, node: usize, tol: f64 },

    #[error("time step {dt:e} exceeds CFL bound {dt_max:e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("mass {lost:e} left the velocity domain (limit {limit:e}) by t = {time}")]
    VelocityBoundaryLoss { lost: f64, limit: f64, time: f64 },

    #[error("blow-up at t = {time}: {reason} (max density {max_mu:e})")]
    BlowUp {
        time: f64,
        max_mu: f64,
        reason: String,
    },

    #[error("no snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, Error::BlowUp { .. })
    }
}
