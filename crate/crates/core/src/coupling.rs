//! Filling factor, coupling strength and coupling-regime classification.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::demag::Axis;
use crate::numeric::pairwise_sum;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMapHeader {
    pub spacing_m: [f64; 3],
    /// Cell counts (n_x, n_y, n_z); flat arrays are x-fastest.
    pub shape: [usize; 3],
}

/// RF magnetic field sampled on a uniform grid, as exported from a field solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub header: FieldMapHeader,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub hz: Vec<f64>,
    pub in_sample: Vec<bool>,
}

impl FieldMap {
    pub fn new(header: FieldMapHeader, hx: Vec<f64>, hy: Vec<f64>, hz: Vec<f64>, in_sample: Vec<bool>) -> Result<Self> {
        let map = Self { header, hx, hy, hz, in_sample };
        map.validate()?;
        Ok(map)
    }

    /// Map with the same vector `h` in every cell.
    pub fn uniform(shape: [usize; 3], spacing_m: [f64; 3], h: [f64; 3], in_sample: Vec<bool>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(
            FieldMapHeader { spacing_m, shape },
            vec![h[0]; n],
            vec![h[1]; n],
            vec![h[2]; n],
            in_sample,
        )
    }

    pub fn len(&self) -> usize {
        self.hx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hx.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.header.spacing_m.iter().product()
    }

    /// Center of cell `idx` relative to the grid origin corner.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let [nx, ny, _] = self.header.shape;
        let ix = idx % nx;
        let iy = (idx / nx) % ny;
        let iz = idx / (nx * ny);
        let s = self.header.spacing_m;
        [(ix as f64 + 0.5) * s[0], (iy as f64 + 0.5) * s[1], (iz as f64 + 0.5) * s[2]]
    }

    pub fn h(&self, idx: usize) -> [f64; 3] {
        [self.hx[idx], self.hy[idx], self.hz[idx]]
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.header.shape.iter().product();
        if n == 0 {
            return Err(Error::InvalidInput("field map has no cells".into()));
        }
        if self.header.spacing_m.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("grid spacing must be positive".into()));
        }
        for (name, len) in [
            ("hx", self.hx.len()),
            ("hy", self.hy.len()),
            ("hz", self.hz.len()),
            ("in_sample", self.in_sample.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!("{name} has {len} entries, shape implies {n}")));
            }
        }
        if !self.in_sample.iter().any(|&b| b) {
            return Err(Error::InvalidInput("field map has no in-sample cell".into()));
        }
        if self.hx.iter().chain(&self.hy).chain(&self.hz).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field map contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: FieldMap = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Filling factor η: transverse field integrated over the sample, normalized
/// by the total field energy in the cavity.
pub fn filling_factor(map: &FieldMap, bias_axis: Axis) -> Result<f64> {
    map.validate()?;
    let (t1, t2) = bias_axis.transverse();
    let dv = map.cell_volume();

    let mut comp1 = Vec::new();
    let mut comp2 = Vec::new();
    for idx in (0..map.len()).filter(|&i| map.in_sample[i]) {
        let h = map.h(idx);
        comp1.push(h[t1.index()]);
        comp2.push(h[t2.index()]);
    }
    let sample_volume = comp1.len() as f64 * dv;
    let int1 = pairwise_sum(&comp1) * dv;
    let int2 = pairwise_sum(&comp2) * dv;

    let energy_density: Vec<f64> = (0..map.len())
        .map(|i| {
            let h = map.h(i);
            h[0] * h[0] + h[1] * h[1] + h[2] * h[2]
        })
        .collect();
    let energy = pairwise_sum(&energy_density) * dv;
    if energy <= 0.0 {
        return Err(Error::UndefinedFillingFactor);
    }
    let eta = ((int1 * int1 + int2 * int2) / (sample_volume * energy)).sqrt();
    // Cauchy–Schwarz bounds η by 1; clip rounding excess
    Ok(eta.min(1.0))
}

/// Ranks named field maps by filling factor, best first.
pub fn rank_field_maps(maps: &[(String, FieldMap)], bias_axis: Axis) -> Result<Vec<(&str, f64)>> {
    let mut ranked = maps
        .iter()
        .map(|(name, map)| Ok((name.as_str(), filling_factor(map, bias_axis)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked)
}

/// (γ/4π)·√((μ/g_lμ_B)·μ₀ħnₛ), in Hz per √(rad/s).
fn coupling_prefactor(constants: &PhysicalConstants) -> f64 {
    let gamma = 2.0 * PI * constants.gyromagnetic_ratio * 1e9;
    let spins_per_moment = constants.moment_per_site / constants.lande_g;
    gamma / (4.0 * PI)
        * (spins_per_moment * constants.vacuum_permeability * constants.reduced_planck * constants.spin_density).sqrt()
}

/// g/2π in GHz for a mode at `cavity_freq` GHz with filling factor `eta`.
pub fn coupling_strength(eta: f64, cavity_freq: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("filling factor must be in [0, 1], got {eta}")));
    }
    if !(cavity_freq.is_finite() && cavity_freq > 0.0) {
        return Err(Error::InvalidInput(format!("cavity frequency must be > 0, got {cavity_freq}")));
    }
    constants.validate()?;
    let omega = 2.0 * PI * cavity_freq * 1e9;
    Ok(eta * omega.sqrt() * coupling_prefactor(constants) * 1e-9)
}

/// Cavity frequency (GHz) at which g/ω reaches `ratio` for filling factor `eta`.
///
/// Since g ∝ η√ω, g/ω = ratio gives f = 2π·(η·K/ratio)².
pub fn frequency_for_ratio(eta: f64, ratio: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) || !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidInput(format!("need eta in (0, 1] and ratio > 0, got {eta}, {ratio}")));
    }
    constants.validate()?;
    let k = coupling_prefactor(constants);
    Ok(2.0 * PI * (eta * k / ratio).powi(2) * 1e-9)
}

/// Frequency below which the deep-strong regime (g/ω ≥ 1) is reached.
pub fn dsc_threshold_frequency(eta: f64, constants: &PhysicalConstants) -> Result<f64> {
    frequency_for_ratio(eta, 1.0, constants)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Sc,
    Usc,
    Dsc,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Sc => "SC",
            Regime::Usc => "USC",
            Regime::Dsc => "DSC",
        })
    }
}

/// SC below 0.1, USC on [0.1, 1), DSC from 1 up.
pub fn classify_regime(g_over_omega: f64) -> Regime {
    if g_over_omega < 0.1 {
        Regime::Sc
    } else if g_over_omega < 1.0 {
        Regime::Usc
    } else {
        Regime::Dsc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub eta: f64,
    pub g_over_2pi: f64,
    pub g_over_omega: f64,
    pub regime: Regime,
}

pub fn evaluate_coupling(eta: f64, cavity_freq: f64, constants: &PhysicalConstants) -> Result<CouplingResult> {
    let g = coupling_strength(eta, cavity_freq, constants)?;
    let ratio = g / cavity_freq;
    Ok(CouplingResult { eta, g_over_2pi: g, g_over_omega: ratio, regime: classify_regime(ratio) })
}

/// (g/ω, g²/2πω) from a fitted g/2π and bright-mode frequency, both GHz.
pub fn table_consistency(g_over_2pi: f64, f_bm: f64) -> Result<(f64, f64)> {
    if !(f_bm.is_finite() && f_bm > 0.0) {
        return Err(Error::InvalidInput(format!("f_BM must be > 0, got {f_bm}")));
    }
    Ok((g_over_2pi / f_bm, g_over_2pi * g_over_2pi / f_bm))
}
