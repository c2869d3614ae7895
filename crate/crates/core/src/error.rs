use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {n}")]
    InvalidDimension { n: usize, min: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh under-resolved near center: local h = {local_h:.3e}, need h <= {required_h:.3e} for radius {radius:.3e}")]
    UnderResolved {
        radius: f64,
        local_h: f64,
        required_h: f64,
    },

    #[error("series needs at least {needed} terms for the requested accuracy, got {given}")]
    InsufficientTerms { needed: usize, given: usize },

    #[error("mesh functions live on different meshes")]
    MeshMismatch,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
