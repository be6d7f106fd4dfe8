use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("degenerate metric at node {node}")]
    DegenerateMetric { node: usize },
    #[error("contact angle must lie in (0, 1), got {0}")]
    InvalidAngle(f64),
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("boundary condition solve failed: {0}")]
    BcSolveFailure(String),
    #[error("boundary Newton iteration did not converge (residual {residual:e})")]
    NewtonFailure { residual: f64 },
    #[error("mesh degeneracy: {0}")]
    MeshDegeneracy(String),
    #[error("time step underflow (dt = {dt:e} at t = {t})")]
    StepUnderflow { dt: f64, t: f64 },
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("seed violates compatibility: residual {residual:e}")]
    IncompatibleSeed { residual: f64 },
    #[error("reconstruction failed: {0}")]
    ReconstructionFailure(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("snapshot format: {0}")]
    SnapshotFormat(String),
    #[error("inconsistent snapshots: {0}")]
    InconsistentSnapshots(String),
    #[error("check not applicable: {0}")]
    NotApplicable(String),
    #[error("origin is not inside the body: p = {p_min:e}")]
    OriginOutside { p_min: f64 },
    #[error("map is not a diffeomorphism: min Jacobian {min_jacobian:e}")]
    NotDiffeo { min_jacobian: f64 },
}
