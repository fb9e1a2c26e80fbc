use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("unbalanced panel: {} missing (region, period) cells, first: {}", .0.len(), fmt_cells(.0))]
    MissingCell(Vec<(String, String)>),

    #[error("duplicate (region, period) cell ({0}, {1})")]
    DuplicateCell(String, String),

    #[error("non-numeric value `{value}` in column `{column}` at line {line}")]
    NonNumericValue {
        column: String,
        line: usize,
        value: String,
    },

    #[error("panel is already demeaned")]
    AlreadyDemeaned,

    #[error("panel must be two-way demeaned before estimation")]
    NotDemeaned,

    #[error("k-NN needs more than k = {k} regions, got {n}")]
    TooFewRegions { n: usize, k: usize },

    #[error("regions {0} and {1} have coincident coordinates")]
    CoincidentPoints(usize, usize),

    #[error("non-finite coordinate for region {0}")]
    NonFiniteCoordinate(usize),

    #[error("row {0} has no positive weight and cannot be row-normalized")]
    EmptyRow(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("factorization broke down at rho = {0}")]
    SingularAtGridPoint(f64),

    #[error("rho = {0} outside the open interval (-1, 1)")]
    OutOfSupport(f64),

    #[error("log-determinant grid needs at least {min} points, got {got}")]
    GridTooCoarse { min: usize, got: usize },

    #[error("{method} log-determinant method supports at most {max} regions, got {n}")]
    MethodTooLarge {
        method: &'static str,
        max: usize,
        n: usize,
    },

    #[error("matrix is not positive definite (pivot {0})")]
    NonPosDefPrecision(usize),

    #[error("residual quadratic form is zero with b = 0; posterior for sigma^2 is improper")]
    DegenerateResidual,

    #[error("no log-determinant grid for the active weight matrix")]
    GridMissing,

    #[error("marginal likelihood quadrature underflowed")]
    QuadratureUnderflow,

    #[error("all model scores are infinite or NaN")]
    AllInfinite,

    #[error("series expansion not converged; need m >= {required}")]
    SeriesNotConverged { required: usize },

    #[error("need at least {min} draws, got {got}")]
    InsufficientDraws { min: usize, got: usize },

    #[error("chain has zero variance")]
    ZeroVariance,

    #[error("chain of length {got} is shorter than the required {min}")]
    ChainTooShort { min: usize, got: usize },

    #[error("draws were produced for weight matrix {expected}, current matrix is {found}")]
    StaleDraws { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn fmt_cells(cells: &[(String, String)]) -> String {
    cells
        .first()
        .map(|(r, p)| format!("({r}, {p})"))
        .unwrap_or_default()
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) => ErrorKind::Usage,
            Io { .. }
            | Format { .. }
            | MissingColumn(_)
            | MissingCell(_)
            | DuplicateCell(..)
            | NonNumericValue { .. }
            | AlreadyDemeaned
            | NotDemeaned
            | TooFewRegions { .. }
            | CoincidentPoints(..)
            | NonFiniteCoordinate(_)
            | EmptyRow(_)
            | DimensionMismatch { .. }
            | StaleDraws { .. }
            | InsufficientDraws { .. }
            | ChainTooShort { .. }
            | GridTooCoarse { .. }
            | MethodTooLarge { .. }
            | OutOfSupport(_)
            | GridMissing => ErrorKind::Data,
            SingularAtGridPoint(_)
            | NonPosDefPrecision(_)
            | DegenerateResidual
            | QuadratureUnderflow
            | AllInfinite
            | SeriesNotConverged { .. }
            | ZeroVariance => ErrorKind::Numerical,
        }
    }
}
