//! Cavity magnon-polariton toolkit: demagnetizing tensors of rectangular
//! samples, Kittel FMR, light-matter dispersion models, filling factors and
//! coupling strengths, synthetic transmission spectra, branch extraction and
//! fitting, and cross-cavity analyses.
//!
//! Frequencies are in GHz (ordinary frequency, not angular) and fields in
//! tesla unless stated otherwise.

pub mod analysis;
pub mod constants;
pub mod coupling;
pub mod demag;
pub mod dispersion;
mod error;
pub mod fit;
pub mod fmr;
pub mod numeric;
pub mod spectrum;
pub mod svg;

pub use analysis::{CavityRecord, Quadratic, Report};
pub use constants::PhysicalConstants;
pub use coupling::{FieldMap, Regime};
pub use demag::{Axis, DemagTensor, EvalPoint, SampleGeometry};
pub use dispersion::{BranchPair, DispersionParams, Model};
pub use error::{Error, Result};
pub use fit::{FitParams, FitProblem, FitResult, Param};
pub use fmr::FmrParams;
pub use spectrum::{BranchData, BranchLabel, BranchPoint, GridSpec, Spectrum2D, SynthConfig};
