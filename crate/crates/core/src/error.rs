use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site index {index} out of range for {len} sites")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("neighborhood {kind} is not defined for {dims}-dimensional grids")]
    NeighborhoodMismatch { kind: String, dims: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("singular covariance{}", label.map(|l| format!(" for label {l}")).unwrap_or_default())]
    SingularCovariance { label: Option<usize> },

    #[error("k-means needs {k} distinct observations, found {distinct}")]
    TooFewDistinct { distinct: usize, k: usize },

    #[error("invalid fitting weights: {0}")]
    InvalidWeights(String),

    #[error("effective sample count {effective} is below the component count {components}")]
    InsufficientSamples { effective: usize, components: usize },

    #[error("label {label} collapsed (posterior mass {mass:.3e})")]
    LabelCollapse { label: usize, mass: f64 },

    #[error("site {site} has zero density under every label")]
    ZeroEvidence { site: usize },

    #[error("EM iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical model rather than of inputs or files.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularCovariance { .. }
            | Error::LabelCollapse { .. }
            | Error::InsufficientSamples { .. }
            | Error::InvalidWeights(_)
            | Error::ZeroEvidence { .. }
            | Error::TooFewDistinct { .. } => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } => true,
            Error::AtIteration { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
