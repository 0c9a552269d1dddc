use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped by the kind of failure so that front ends can map
/// them onto stable exit codes (see [`Error::category`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // -- parameter validation
    #[error("L must be even (got {0})")]
    OddL(usize),
    #[error("L must be between 2 and 64 (got {0})")]
    SitesOutOfRange(usize),
    #[error("particle number must be L/2 = {expected} (got {got})")]
    BadFilling { expected: usize, got: usize },
    #[error("noise strength p must lie in [0, 1] (got {0})")]
    BadStrength(f64),
    #[error("custom operator needs {expected} coefficients (got {got})")]
    BadCoefficients { expected: usize, got: usize },
    #[error("invalid sampler configuration: {0}")]
    BadSamplerConfig(String),
    #[error("invalid request: {0}")]
    BadRequest(String),

    // -- configuration algebra
    #[error("configuration has {got} particles, expected {expected}")]
    WrongSector { expected: usize, got: usize },
    #[error("cannot remove sites that are not occupied")]
    RemoveNotOccupied,
    #[error("configuration length {got} does not match model length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    // -- sampling / estimation
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("operator is not diagonal in the occupation basis")]
    NotDiagonal,
    #[error("no cardinality profile satisfies the ring constraints")]
    ProfileSetEmpty,
    #[error("need at least {needed} points for the fit (got {got})")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit window contains a zero value at r = {0}")]
    NonPositiveValues(usize),

    // -- resource limits
    #[error("sector dimension {dim} exceeds the dense limit {limit}")]
    SectorTooLarge { dim: usize, limit: usize },
    #[error("L = {sites} exceeds the full-space limit of {limit} sites")]
    SpaceTooLarge { sites: usize, limit: usize },

    // -- bounds
    #[error("moment table lacks Tr(rho^{r} O rho^{s} O)")]
    MissingTrace { r: usize, s: usize },
    #[error("bound of order {order} needs T_0..T_{needed}")]
    MissingTk { order: usize, needed: usize },
    #[error("Hankel moment matrix is singular")]
    SingularMatrix,
    #[error("closed form diverges or degenerates at p = {0}")]
    DegenerateP(f64),

    // -- io
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Format(String),
}

/// Coarse classification used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Resource,
    Numerical,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            OddL(_)
            | SitesOutOfRange(_)
            | BadFilling { .. }
            | BadStrength(_)
            | BadCoefficients { .. }
            | BadSamplerConfig(_)
            | BadRequest(_)
            | WrongSector { .. }
            | RemoveNotOccupied
            | LengthMismatch { .. }
            | NotDiagonal
            | EmptyPool
            | TooFewPoints { .. }
            | MissingTrace { .. }
            | MissingTk { .. } => ErrorCategory::Validation,
            SectorTooLarge { .. } | SpaceTooLarge { .. } => ErrorCategory::Resource,
            ProfileSetEmpty | NonPositiveValues(_) | SingularMatrix | DegenerateP(_) => {
                ErrorCategory::Numerical
            }
            Io(_) | Format(_) => ErrorCategory::Io,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
