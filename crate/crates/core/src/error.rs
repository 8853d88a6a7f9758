use std::path::PathBuf;

use crate::arch::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {}", format_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("input resolution infeasible: spatial size reaches 0 at layer {layer_index}")]
    InfeasibleResolution { layer_index: usize },

    #[error("shape mismatch at layer {layer_index}: {detail}")]
    ShapeMismatch { layer_index: usize, detail: String },

    #[error("no input resolution given and the spec has no default")]
    MissingResolution,

    #[error("channel rounding breaks group divisibility at layer {layer_index}")]
    RoundingBreaksGroups { layer_index: usize },

    #[error("invalid group width {0}")]
    InvalidGroupWidth(u32),

    #[error("cannot resolve head count for hidden size {hidden_dim} with {num_heads} heads")]
    HeadDivisibility { hidden_dim: u32, num_heads: u32 },

    #[error("image side {image} is not divisible by patch size {patch}")]
    IndivisibleImage { image: u32, patch: u32 },

    #[error("transform `{transform}` does not apply to {arch} specs")]
    UnsupportedTransform {
        transform: String,
        arch: &'static str,
    },

    #[error("invalid transform `{0}`")]
    InvalidTransform(String),

    #[error("invalid sweep space: {0}")]
    InvalidSpace(String),

    #[error("sweep space has {size} configurations, above the cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },

    #[error("target {target} FLOPs is outside the attainable range [{min}, {max}]")]
    TargetUnreachable { target: u128, min: u128, max: u128 },

    #[error("no candidate satisfies the metric drop budget")]
    NoFeasibleCandidate,

    #[error("baseline `{0}` not found or missing the selection metric")]
    MissingBaseline(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: parse error at line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: duplicate annotation ({config_id}, {metric}) on lines {first_line} and {line}", path.display())]
    DuplicateAnnotation {
        path: PathBuf,
        config_id: String,
        metric: String,
        first_line: u64,
        line: u64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Infeasible,
    Usage,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::InfeasibleResolution { .. }
            | Error::TargetUnreachable { .. }
            | Error::NoFeasibleCandidate => ErrorClass::Infeasible,
            Error::InvalidArgument(_) => ErrorClass::Usage,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
