use thiserror::Error;

/// Errors raised by the library.
///
/// Conditions that are part of a normal result (an undefined potential at a
/// node, a violated necessary condition) are reported in the returned values
/// rather than raised here.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval ({left}, {right}): need finite left < right")]
    InvalidInterval { left: f64, right: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("not integrable: {0}")]
    NotIntegrable(String),

    #[error("extended-real arithmetic produced an indeterminate form: {0}")]
    Indeterminate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate source: h <= 0 at interior node {node}")]
    DegenerateSource { node: usize },

    #[error("invalid comparison function h: {0}")]
    InvalidH(String),

    #[error("sign condition on V violated at {} node(s), first at {}", nodes.len(), nodes.first().copied().unwrap_or(0))]
    InvalidSign { nodes: Vec<usize> },

    #[error("precondition failed at {} node(s): {reason}", nodes.len())]
    PreconditionFailed { reason: String, nodes: Vec<usize> },

    #[error("a = {a} exceeds the sharp constant a* = {a_star}; x = 1 - a x^q has no root in (0,1)")]
    DivergingBracket { a: f64, a_star: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("sub-solution exceeds super-solution at {} node(s)", nodes.len())]
    NotOrdered { nodes: Vec<usize> },

    #[error("fit window holds {found} sample(s); at least {needed} required")]
    WindowTooSmall { found: usize, needed: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("quadrature did not resolve the integrand: {reason}; hint: {hint}")]
    ResolutionInsufficient { reason: String, hint: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
