//! Kittel-mode FMR frequency of a saturated prism.

use serde::{Deserialize, Serialize};

use crate::constants::{GAMMA_GHZ_PER_T, YIG_SATURATION_FIELD_T};
use crate::demag::{demag_center, Axis, DemagTensor, SampleGeometry};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmrParams {
    /// γ/2π in GHz/T.
    pub gyromagnetic_ratio: f64,
    /// μ₀Mₛ in tesla.
    pub saturation_field: f64,
    pub bias_axis: Axis,
    pub demag: DemagTensor,
}

impl FmrParams {
    pub fn new(gyromagnetic_ratio: f64, saturation_field: f64, bias_axis: Axis, demag: DemagTensor) -> Result<Self> {
        if !(gyromagnetic_ratio.is_finite() && gyromagnetic_ratio > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gyromagnetic ratio must be positive, got {gyromagnetic_ratio}"
            )));
        }
        if !(saturation_field.is_finite() && saturation_field >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "saturation field must be >= 0, got {saturation_field}"
            )));
        }
        demag.validate()?;
        Ok(Self { gyromagnetic_ratio, saturation_field, bias_axis, demag })
    }

    /// Uses the center-evaluated tensor of `geom`.
    pub fn from_geometry(geom: &SampleGeometry) -> Self {
        Self {
            gyromagnetic_ratio: GAMMA_GHZ_PER_T,
            saturation_field: geom.saturation_field,
            bias_axis: geom.bias_axis,
            demag: demag_center(geom),
        }
    }

    /// The YIG slab with its center demagnetizing tensor.
    pub fn yig_slab() -> Self {
        Self::from_geometry(&SampleGeometry::yig_slab())
    }

    pub fn sphere(saturation_field: f64) -> Self {
        Self {
            gyromagnetic_ratio: GAMMA_GHZ_PER_T,
            saturation_field,
            bias_axis: Axis::Z,
            demag: DemagTensor::sphere(),
        }
    }

    pub fn with_gyromagnetic_ratio(mut self, gamma: f64) -> Self {
        self.gyromagnetic_ratio = gamma;
        self
    }

    fn frame(&self) -> (f64, f64, f64, f64) {
        let (t1, t2) = self.bias_axis.transverse();
        let b = self.bias_axis;
        (
            self.demag.get(t1, t1),
            self.demag.get(t2, t2),
            self.demag.get(b, b),
            self.demag.get(t1, t2) + self.demag.get(t2, t1),
        )
    }
}

impl Default for FmrParams {
    fn default() -> Self {
        Self::sphere(YIG_SATURATION_FIELD_T)
    }
}

/// Static field inside the sample along the bias axis, H₀ − N_bb·μ₀Mₛ (tesla).
pub fn internal_field(applied_field: f64, params: &FmrParams) -> f64 {
    let (_, _, n_bias, _) = params.frame();
    applied_field - n_bias * params.saturation_field
}

/// FMR frequency in GHz at the applied field (tesla).
///
/// The Kittel brackets use |H₀|; the demagnetizing correction enters through
/// the (N_tt − N_bb)·Mₛ terms. A negative bracket or radicand means the
/// sample is not saturated along the bias axis.
pub fn fmr_frequency(applied_field: f64, params: &FmrParams) -> Result<f64> {
    let (n1, n2, nb, n12) = params.frame();
    let ms = params.saturation_field;
    let h = applied_field.abs();
    let b1 = h + (n1 - nb) * ms;
    let b2 = h + (n2 - nb) * ms;
    if b1 < 0.0 || b2 < 0.0 {
        return Err(Error::Unsaturated { field: applied_field });
    }
    let radicand = b1 * b2 - (n12 * ms).powi(2);
    if radicand < 0.0 {
        return Err(Error::Unsaturated { field: applied_field });
    }
    Ok(params.gyromagnetic_ratio * radicand.sqrt())
}

/// Evenly spaced fields from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..steps)
            .map(|i| start + (stop - start) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// (field, frequency) pairs; unsaturated fields carry the error.
pub fn fmr_sweep(fields: &[f64], params: &FmrParams) -> Vec<(f64, Result<f64>)> {
    fields.iter().map(|&h| (h, fmr_frequency(h, params))).collect()
}
