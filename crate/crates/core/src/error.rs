use thiserror::Error;

/// Every failure the library can report.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum KolmoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix A is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("diffusion block A0 is not positive definite: {0}")]
    A0NotPositive(String),
    #[error("subdiagonal block B_{0} is rank deficient")]
    BlockRankDeficient(usize),
    #[error("invalid strata: {0}")]
    InvalidStrata(String),
    #[error("sigma does not factor A: |A - sigma sigma^T/2| = {0:.3e}")]
    SigmaMismatch(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("Gramian is singular (min eigenvalue {0:.3e})")]
    GramianSingular(f64),
    #[error("norm is undefined at the origin")]
    ZeroPoint,
    #[error("zero normal vector")]
    ZeroNormal,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("kernel evaluated at its pole")]
    PoleEvaluation,
    #[error("test-solution pole lies inside the integration domain")]
    PoleInsideDomain,
    #[error("bad time order: {0}")]
    BadTimeOrder(String),
    #[error("sample count must be at least 2, got {0}")]
    BadSampleCount(usize),
    #[error("bad step size: {0}")]
    BadStep(String),
    #[error("empty control grid")]
    EmptyControl,
    #[error("system is not controllable (Kalman rank {rank} < {n})")]
    NotControllable { rank: usize, n: usize },
    #[error("point lies outside the domain")]
    PointOutsideDomain,
    #[error("point lies on the domain boundary")]
    PointOnBoundary,
    #[error("admissible curve leaves the domain at s = {0}")]
    CurveExitsDomain(f64),
    #[error("no window width above the grid step satisfies the energy bound")]
    EnergyWindowUnsatisfiable,
    #[error("target is not attainable: {0}")]
    TargetNotAttainable(String),
    #[error("block-exponential and quadrature Gramians disagree (relative {0:.3e})")]
    QuadratureMismatch(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, KolmoError>;
