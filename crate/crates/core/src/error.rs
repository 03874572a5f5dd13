use std::fmt;

use crate::dse::SearchStats;

/// One failed invariant, addressed by the field path it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.path, self.message)
    }
}

/// A non-empty list of violations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn iter(&self) -> std::slice::Iter<'_, Violation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mentions(&self, path: &str) -> bool {
        self.0.iter().any(|v| v.path == path)
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Parse failure in a `.dflow` document. Line and column are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct DslError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("arithmetic overflow while computing {0}")]
    Overflow(String),

    #[error("invalid layer: {0}")]
    InvalidLayer(Violations),

    #[error("invalid hardware config: {0}")]
    InvalidHardware(Violations),

    #[error("illegal mapping: {0}")]
    Illegal(Violations),

    #[error(transparent)]
    Dsl(#[from] DslError),

    #[error("bandwidth `{field}` is zero")]
    ZeroBandwidth { field: String },

    #[error("instance too large for the oracle: {iterations} body iterations exceed the cap of {cap}")]
    InstanceTooLarge { iterations: u64, cap: u64 },

    #[error("search space holds {size} candidates, above the exhaustive cap of {cap}")]
    SpaceTooLarge { size: u64, cap: u64 },

    #[error("no feasible mapping: {0}")]
    NoFeasibleMapping(SearchStats),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn overflow(what: impl Into<String>) -> Self {
        Error::Overflow(what.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
