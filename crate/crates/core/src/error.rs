use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {row} has {len} entries")]
    NonSquare { rows: usize, row: usize, len: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSumOutOfTolerance { row: usize, sum: f64 },
    #[error("invalid probability vector: {0}")]
    InvalidBelief(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stationary distribution is not unique (more than one recurrent class)")]
    NonUniqueStationary,
    #[error("observation {y} has likelihood {sigma:e} below the underflow floor")]
    ZeroLikelihood { y: usize, sigma: f64 },
    #[error("observation index {y} outside alphabet of size {size}")]
    ObservationOutOfRange { y: usize, size: usize },
    #[error("enumeration too large: {states} states over {steps} steps")]
    TooLarge { states: usize, steps: usize },
    #[error("model has no state levels")]
    MissingLevels,
    #[error("sample-path bound denominator is not positive (A - eps = {a_minus_eps}, mu = {mu})")]
    DegenerateBound { a_minus_eps: f64, mu: f64 },
    #[error("order precondition violated: {0}")]
    OrderViolation(String),
    #[error("adjacency matrix is not strictly upper triangular at ({row}, {col})")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("likelihood ratio undefined for observation {y}")]
    UndefinedLikelihoodRatio { y: usize },
    #[error("value iteration did not converge within {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("grid resolution {resolution} below minimum {minimum}")]
    GridTooCoarse { resolution: usize, minimum: usize },
    #[error("parameter {name} = {value} out of range")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("not a stopping problem: {0}")]
    NotStoppingProblem(String),
    #[error("budget {budget} exceeds horizon {horizon}")]
    BudgetExceedsHorizon { budget: usize, horizon: usize },
    #[error("inertia {mu} below required bound {bound}")]
    InertiaTooSmall { mu: f64, bound: f64 },
    #[error("cost bounds are degenerate: lower {lower} >= upper {upper}")]
    DegenerateBounds { lower: f64, upper: f64 },
    #[error("noise density is unbounded")]
    UnboundedDensity,
    #[error("linear program is {0}")]
    LpStatus(&'static str),
}
