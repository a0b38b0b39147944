use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AecError {
    #[error("input too short: need at least {needed} samples, got {got}")]
    ShortInput { needed: usize, got: usize },

    #[error("signal is silent or has no usable energy")]
    NoSignal,

    #[error("max lag {max_lag} must be smaller than the shortest input ({min_len} samples)")]
    BadLag { max_lag: usize, min_len: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible sampling constraints: {0}")]
    Infeasible(String),

    #[error("latent length mismatch: {0} vs {1} frames")]
    LatentMismatch(usize, usize),

    #[error("example {0} is missing the stems needed for this operation")]
    MissingStems(String),

    #[error("training diverged at step {step}")]
    Diverged { step: u64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("missing artifact for {cell}: {what}")]
    MissingArtifact { cell: String, what: String },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl AecError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AecError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line tool: 2 configuration,
    /// 3 input or output, 4 missing artifact, 5 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            AecError::InvalidConfig(_) | AecError::Infeasible(_) | AecError::BadLag { .. } => 2,
            AecError::MissingArtifact { .. } => 4,
            AecError::Diverged { .. } => 5,
            _ => 3,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AecError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AecError>;
