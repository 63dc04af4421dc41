//! Physical constants used by the coupling-strength formula.

use serde::{Deserialize, Serialize};

/// Gyromagnetic ratio of YIG divided by 2π, in GHz per tesla.
pub const GAMMA_GHZ_PER_T: f64 = 28.0;

/// Room-temperature μ₀Mₛ of YIG in tesla.
pub const YIG_SATURATION_FIELD_T: f64 = 0.176;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// ħ in J·s.
    pub reduced_planck: f64,
    /// μ₀ in T·m/A.
    pub vacuum_permeability: f64,
    /// μ_B in J/T.
    pub bohr_magneton: f64,
    pub lande_g: f64,
    /// Magnetic moment per site in units of the Bohr magneton.
    pub moment_per_site: f64,
    /// Spin density nₛ in m⁻³.
    pub spin_density: f64,
    /// γ/2π in GHz/T.
    pub gyromagnetic_ratio: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            reduced_planck: 1.054_571_817e-34,
            vacuum_permeability: 1.256_637_062_12e-6,
            bohr_magneton: 9.274_010_078_3e-24,
            lande_g: 2.0,
            moment_per_site: 5.0,
            spin_density: 4.22e27,
            gyromagnetic_ratio: GAMMA_GHZ_PER_T,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("reduced_planck", self.reduced_planck),
            ("vacuum_permeability", self.vacuum_permeability),
            ("bohr_magneton", self.bohr_magneton),
            ("lande_g", self.lande_g),
            ("moment_per_site", self.moment_per_site),
            ("spin_density", self.spin_density),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// μ₀Mₛ implied by the moment per site and spin density, in tesla.
    ///
    /// For the YIG defaults this is ≈ 0.246 T, larger than the 0.176 T
    /// room-temperature value used for the FMR.
    pub fn implied_saturation_field(&self) -> f64 {
        self.vacuum_permeability * self.moment_per_site * self.bohr_magneton * self.spin_density
    }
}
