use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infinite SNR: noise power is zero")]
    InfiniteSnr,

    #[error("specification error at layer {layer}: {reason}")]
    Spec { layer: usize, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("divergence undefined: p[{index}] > 0 where q[{index}] = 0")]
    DivergenceUndefined { index: usize },

    #[error("stratification error: no frames for class {class} at {snr_db} dB")]
    Stratification { class: usize, snr_db: i32 },

    #[error("aggregation error at layer {layer}: {reason}")]
    Aggregation { layer: usize, reason: String },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("config parse error at line {line} (key `{key}`): {reason}")]
    Parse {
        line: usize,
        key: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Length(_) => "length",
            Error::Degenerate(_) => "degenerate",
            Error::InfiniteSnr => "infinite_snr",
            Error::Spec { .. } => "spec",
            Error::Dimension(_) => "dimension",
            Error::Label { .. } => "label",
            Error::Empty(_) => "empty",
            Error::DivergenceUndefined { .. } => "divergence",
            Error::Stratification { .. } => "stratification",
            Error::Aggregation { .. } => "aggregation",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
