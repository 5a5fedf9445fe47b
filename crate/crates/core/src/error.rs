use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} is not prime")]
    NotPrime(u32),
    #[error("no inverse: 0 mod {0}")]
    NoInverse(u32),
    #[error("half undefined for d = 2")]
    HalfUndefined,
    #[error("{what} requires an odd prime dimension, got d = {d}")]
    NeedsOdd { what: &'static str, d: u32 },
    #[error("state of {d}^{n} amplitudes exceeds cap {cap}")]
    CapExceeded { d: u32, n: usize, cap: usize },
    #[error("site {site} out of range for {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("repeated site {0}")]
    RepeatedSite(usize),
    #[error("forced outcome {outcome} has zero probability ({prob:e})")]
    ZeroProbability { outcome: u32, prob: f64 },
    #[error("outcome {outcome} out of range for d = {d}")]
    OutcomeOutOfRange { outcome: u32, d: u32 },
    #[error("symmetry check needs periodic boundaries")]
    OpenBoundary,
    #[error("lattice too small: {0}")]
    LatticeTooSmall(String),
    #[error("k = 0 gives the trivial phase")]
    TrivialClass,
    #[error("domain outcomes incomplete: {given} of {needed} domain sites assigned")]
    IncompleteOutcomes { given: usize, needed: usize },
    #[error("inconsistent orientation: {0}")]
    InconsistentOrientation(String),
    #[error("vertex {0} not in graph")]
    MissingVertex(usize),
    #[error("vertex {vertex} must have degree {expected}, has {actual}")]
    BadDegree { vertex: usize, expected: usize, actual: usize },
    #[error("subcritical instance: {0}")]
    Subcritical(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    /// File, JSON or CSV failure, kept as text so the enum stays comparable.
    #[error("output: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
