use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario or experiment parameters that are malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("angle-pair selection for group {group} is empty")]
    EmptySelection { group: usize },

    #[error("infeasible precoder: {rf_chains} RF chains cannot serve {users} users")]
    Infeasible { rf_chains: usize, users: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("regularized Gram matrix is singular")]
    Singular,

    #[error("degenerate scaling: {0}")]
    DegenerateScaling(&'static str),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed, truncated or otherwise unreadable persisted data.
    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    /// Data that parsed correctly but violates a domain invariant.
    #[error("validation failure: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
