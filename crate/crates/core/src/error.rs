use thiserror::Error;

/// Failure modes shared by every module of the lab.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("resource limit exceeded: {message} (largest completed radius {largest_radius})")]
    Resource {
        message: String,
        largest_radius: u32,
    },

    #[error("domain too small: need radius {needed}, have {available}")]
    DomainTooSmall { needed: i64, available: u32 },

    #[error("word length of {element} exceeds radius cap {cap}")]
    CapExceeded { element: String, cap: u32 },

    #[error("truncation too small: escaped mass {escaped:e} exceeds {limit:e}")]
    TruncationTooSmall { escaped: f64, limit: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("R0 not reached: Gram form singular at radius {radius}")]
    SingularGram { radius: u32 },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        LabError::Usage(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Usage(_) => "usage",
            LabError::Config(_) => "config",
            LabError::Resource { .. } => "resource",
            LabError::DomainTooSmall { .. } => "domain-too-small",
            LabError::CapExceeded { .. } => "cap-exceeded",
            LabError::TruncationTooSmall { .. } => "truncation-too-small",
            LabError::Precondition(_) => "precondition",
            LabError::SingularGram { .. } => "singular-gram",
            LabError::Inconclusive(_) => "inconclusive",
            LabError::Schema(_) => "schema",
            LabError::Io(_) => "io",
            LabError::Json(_) => "json",
        }
    }

    /// Process exit code: 2 config/usage, 3 resource, 4 inconclusive, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Config(_) | LabError::Schema(_) => 2,
            LabError::Resource { .. }
            | LabError::CapExceeded { .. }
            | LabError::TruncationTooSmall { .. } => 3,
            LabError::Inconclusive(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
