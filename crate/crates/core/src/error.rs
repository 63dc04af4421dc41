use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The demagnetizing formulas are singular on the prism surface.
    #[error("point ({x:.6e}, {y:.6e}, {z:.6e}) m is not strictly inside the prism")]
    OutsideSample { x: f64, y: f64, z: f64 },

    #[error("sample is not saturated at applied field {field:.6} T")]
    Unsaturated { field: f64 },

    #[error("unstable regime: lower polariton radicand is negative ({radicand:.6e})")]
    UnstableRegime { radicand: f64 },

    #[error("superradiant dispersion requires g/omega >= 0.5, got {ratio:.4}")]
    PhaseValidity { ratio: f64 },

    #[error("diamagnetic term D = g^2/omega_m diverges at zero magnon frequency")]
    SingularDiamagnetic,

    #[error("filling factor undefined: field map has zero energy")]
    UndefinedFillingFactor,

    #[error("rank-deficient normal equations: parameter `{parameter}` is not identifiable")]
    RankDeficient { parameter: String },

    #[error("{0}")]
    Precondition(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::OutsideSample { .. } => "outside_sample",
            Error::Unsaturated { .. } => "unsaturated",
            Error::UnstableRegime { .. } => "unstable_regime",
            Error::PhaseValidity { .. } => "phase_validity",
            Error::SingularDiamagnetic => "singular_diamagnetic",
            Error::UndefinedFillingFactor => "undefined_filling_factor",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Precondition(_) => "precondition",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::Parse(_) => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
