use thiserror::Error;

/// Errors raised by the fitting pipeline, the reference models and the integrator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("descriptor matrix E is singular (sigma_min/sigma_max = {ratio:e})")]
    SingularE { ratio: f64 },

    #[error("resolvent (sE - A) is singular at s = {re:e}{im:+e}i{}", pair_suffix(*.pair))]
    SingularResolvent { re: f64, im: f64, pair: Option<usize> },

    #[error("sample count {0} is odd")]
    OddCount(usize),

    #[error("at least 4 samples are required, got {0}")]
    MinimumCount(usize),

    #[error("duplicate sample frequency {re:e}{im:+e}i")]
    DuplicateFrequency { re: f64, im: f64 },

    #[error("samples cannot be split into equal left/right sets without separating a conjugate pair")]
    UnbalancedPartition,

    #[error("left and right frequencies coincide: mu = lambda = {re:e}{im:+e}i")]
    CoincidentFrequency { re: f64, im: f64 },

    #[error("interpolation data is not closed under conjugation: {0}")]
    NotConjugateClosed(String),

    #[error("Loewner pencil is empty")]
    EmptyPencil,

    #[error("sample grid is empty")]
    EmptyGrid,

    #[error("kernel sample count {samples} does not match grid size {grid}")]
    SampleCountMismatch { samples: usize, grid: usize },

    #[error("trajectories are not sampled on the same time grid")]
    GridMismatch,

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("state dimension {dim} exceeds the cap for {model} ({cap})")]
    DimensionCap {
        model: &'static str,
        dim: usize,
        cap: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("closed-form transfer function has a pole at s = {re:e}{im:+e}i")]
    PoleHit { re: f64, im: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable identifier of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "Shape",
            Error::SingularE { .. } => "SingularE",
            Error::SingularResolvent { .. } => "SingularResolvent",
            Error::OddCount(_) => "OddCount",
            Error::MinimumCount(_) => "MinimumCount",
            Error::DuplicateFrequency { .. } => "DuplicateFrequency",
            Error::UnbalancedPartition => "UnbalancedPartition",
            Error::CoincidentFrequency { .. } => "CoincidentFrequency",
            Error::NotConjugateClosed(_) => "NotConjugateClosed",
            Error::EmptyPencil => "EmptyPencil",
            Error::EmptyGrid => "EmptyGrid",
            Error::SampleCountMismatch { .. } => "SampleCountMismatch",
            Error::GridMismatch => "GridMismatch",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::DimensionCap { .. } => "DimensionCap",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::PoleHit { .. } => "PoleHit",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Attaches a sample-pair index to a `SingularResolvent` error.
    pub(crate) fn at_pair(self, index: usize) -> Self {
        match self {
            Error::SingularResolvent { re, im, .. } => Error::SingularResolvent {
                re,
                im,
                pair: Some(index),
            },
            other => other,
        }
    }
}

fn pair_suffix(pair: Option<usize>) -> String {
    pair.map(|i| format!(" (sample pair {i})")).unwrap_or_default()
}

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape {
        what,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
