use thiserror::Error;

/// Errors raised by the laboratory. Variants carry enough context to name the
/// offending fiber, word or field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("window exhausted: index {index} exceeds maximum radius {max_radius}")]
    WindowExceeded { index: i64, max_radius: u64 },
    #[error("index {index} outside explicit path [{lo}, {hi}]")]
    OutsidePath { index: i64, lo: i64, hi: i64 },
    #[error("inadmissible word {word:?} at fiber {fiber}")]
    Inadmissible { fiber: i64, word: Vec<u32> },
    #[error("depth error: {0}")]
    Depth(String),
    #[error("anchor mismatch: {0} vs {1}")]
    AnchorMismatch(i64, i64),
    #[error("insufficient returns: found {found} of {wanted} within the window")]
    InsufficientReturns { found: usize, wanted: usize },
    #[error("metric: {0}")]
    Metric(String),
    #[error("no convergence: {message} (last gap {gap:e})")]
    NonConvergence { message: String, gap: f64, curve: Vec<f64> },
    #[error("mass mismatch: {0:e} vs {1:e}")]
    MassMismatch(f64, f64),
    #[error("linear program: {0}")]
    Lp(String),
    #[error("potential misdeclared at fiber {fiber}: observed {observed:e} exceeds bound {bound:e}")]
    Misdeclared { fiber: i64, observed: f64, bound: f64 },
    #[error("config: {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
