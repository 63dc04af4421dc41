//! Closed-form polariton branch frequencies.
//!
//! Every formula here is homogeneous of degree one in frequency, so all
//! inputs and outputs are plain GHz (f = ω/2π).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Rwa,
    DickeFull,
    DickeSuperradiant,
    Hopfield,
    ShiftedDicke,
}

impl Model {
    pub const ALL: [Model; 5] =
        [Model::Rwa, Model::DickeFull, Model::DickeSuperradiant, Model::Hopfield, Model::ShiftedDicke];

    pub fn name(self) -> &'static str {
        match self {
            Model::Rwa => "rwa",
            Model::DickeFull => "dicke",
            Model::DickeSuperradiant => "superradiant",
            Model::Hopfield => "hopfield",
            Model::ShiftedDicke => "shifted-dicke",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rwa" => Ok(Model::Rwa),
            "dicke" | "dicke-full" => Ok(Model::DickeFull),
            "superradiant" | "dicke-superradiant" => Ok(Model::DickeSuperradiant),
            "hopfield" => Ok(Model::Hopfield),
            "shifted-dicke" | "shifted" => Ok(Model::ShiftedDicke),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    /// Bare cavity (bright mode) frequency, GHz.
    pub cavity_freq: f64,
    /// g/2π, GHz.
    pub coupling: f64,
    /// Δₘ/2π, GHz. Only the shifted-Dicke model reads it.
    pub magnon_shift: f64,
    /// Prefactor d on the diamagnetic term; d = 1 is the standard Hopfield model.
    pub hopfield_prefactor: f64,
    pub model: Model,
    /// Evaluate the Hopfield expression exactly as printed (ω² in both slots)
    /// instead of ω² + ω_m².
    #[serde(default)]
    pub hopfield_literal: bool,
}

impl DispersionParams {
    pub fn new(model: Model, cavity_freq: f64, coupling: f64) -> Self {
        Self {
            cavity_freq,
            coupling,
            magnon_shift: 0.0,
            hopfield_prefactor: 1.0,
            model,
            hopfield_literal: false,
        }
    }

    pub fn shifted(cavity_freq: f64, coupling: f64, magnon_shift: f64) -> Self {
        Self { magnon_shift, ..Self::new(Model::ShiftedDicke, cavity_freq, coupling) }
    }

    pub fn with_model(mut self, model: Model) -> Self {
        self.model = model;
        self
    }

    pub fn with_prefactor(mut self, d: f64) -> Self {
        self.hopfield_prefactor = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.cavity_freq.is_finite() && self.cavity_freq > 0.0) {
            return Err(Error::InvalidInput(format!("cavity frequency must be > 0, got {}", self.cavity_freq)));
        }
        if !ok(self.coupling) {
            return Err(Error::InvalidInput(format!("coupling must be >= 0, got {}", self.coupling)));
        }
        if !ok(self.magnon_shift) {
            return Err(Error::InvalidInput(format!("magnon shift must be >= 0, got {}", self.magnon_shift)));
        }
        if !ok(self.hopfield_prefactor) {
            return Err(Error::InvalidInput(format!(
                "Hopfield prefactor must be >= 0, got {}",
                self.hopfield_prefactor
            )));
        }
        Ok(())
    }

    /// g/ω.
    pub fn coupling_ratio(&self) -> f64 {
        self.coupling / self.cavity_freq
    }

    /// Branches of the selected model at the given bare magnon frequency.
    pub fn branches(&self, magnon_freq: f64) -> Result<BranchPair> {
        match self.model {
            Model::Rwa => rwa(self, magnon_freq),
            Model::DickeFull => dicke_full(self, magnon_freq),
            Model::DickeSuperradiant => dicke_superradiant(self, magnon_freq),
            Model::Hopfield => hopfield(self, magnon_freq),
            Model::ShiftedDicke => shifted_dicke(self, magnon_freq),
        }
    }

    /// Like [`branches`](Self::branches) but clamps negative lower radicands
    /// to zero and skips phase checks. Used inside the optimizer, where trial
    /// points may wander briefly outside a model's domain.
    pub(crate) fn branches_relaxed(&self, magnon_freq: f64) -> BranchPair {
        let w = self.cavity_freq;
        let g = self.coupling;
        let wm = magnon_freq.max(0.0);
        let squares = match self.model {
            Model::Rwa => {
                let mid = 0.5 * (w + wm);
                let half = (0.25 * (w - wm).powi(2) + g * g).sqrt();
                return BranchPair { lower: (mid - half).max(0.0), upper: mid + half };
            }
            Model::DickeFull => dicke_terms(w, wm, g),
            Model::ShiftedDicke => dicke_terms(w, wm + self.magnon_shift, g),
            Model::DickeSuperradiant => superradiant_terms(w, wm, g),
            Model::Hopfield => {
                let d = self.hopfield_prefactor;
                let dia = if g == 0.0 || d == 0.0 { 0.0 } else { 4.0 * d * g * g / wm.max(1e-12) * w };
                hopfield_terms(w, wm, g, dia, self.hopfield_literal)
            }
        };
        let (upper_sq, lower_sq) = upper_lower_sq(squares);
        BranchPair { lower: lower_sq.max(0.0).sqrt(), upper: upper_sq.max(0.0).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPair {
    /// ω₋/2π, GHz.
    pub lower: f64,
    /// ω₊/2π, GHz.
    pub upper: f64,
}

impl BranchPair {
    pub fn splitting(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_magnon(magnon_freq: f64) -> Result<()> {
    if magnon_freq.is_finite() && magnon_freq >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("magnon frequency must be >= 0, got {magnon_freq}")))
    }
}

/// Branch data as (ω₊² + ω₋², √discriminant, ω₊²·ω₋²). The product form keeps
/// the lower branch accurate when it is much smaller than the upper one.
type Squares = (f64, f64, f64);

fn dicke_terms(w: f64, wm: f64, g: f64) -> Squares {
    let sum = w * w + wm * wm;
    let disc = ((w * w - wm * wm).powi(2) + 16.0 * g * g * w * wm).sqrt();
    let product = w * wm * (w * wm - 4.0 * g * g);
    (sum, disc, product)
}

fn superradiant_terms(w: f64, wm: f64, g: f64) -> Squares {
    let gt = 2.0 * g / w;
    let gt4 = gt.powi(4);
    let m = gt4 * wm * wm;
    let sum = w * w + m;
    let disc = ((w * w - m).powi(2) + 4.0 * w * w * wm * wm).sqrt();
    let product = (w * wm).powi(2) * (gt4 - 1.0);
    (sum, disc, product)
}

fn hopfield_terms(w: f64, wm: f64, g: f64, dia: f64, literal: bool) -> Squares {
    let p = w * w + dia;
    let second = if literal { w * w } else { wm * wm };
    let sum = p + second;
    let disc_sq = (p - wm * wm).powi(2) + 16.0 * g * g * w * wm;
    let product = if literal {
        0.25 * (sum * sum - disc_sq)
    } else {
        w * wm * (w * wm - 4.0 * g * g) + dia * wm * wm
    };
    (sum, disc_sq.sqrt(), product)
}

fn upper_lower_sq((sum, disc, product): Squares) -> (f64, f64) {
    let upper_sq = 0.5 * (sum + disc);
    let lower_sq = if upper_sq > 0.0 { product / upper_sq } else { 0.0 };
    (upper_sq, lower_sq)
}

/// Turns the squared-root data into branch frequencies, flagging a negative
/// lower radicand.
fn from_squares(squares: Squares) -> Result<BranchPair> {
    let (upper_sq, lower_sq) = upper_lower_sq(squares);
    if lower_sq < 0.0 {
        return Err(Error::UnstableRegime { radicand: lower_sq });
    }
    Ok(BranchPair { lower: lower_sq.sqrt(), upper: upper_sq.sqrt() })
}

/// Dicke-model branches including counter-rotating terms.
pub fn dicke_full(params: &DispersionParams, magnon_freq: f64) -> Result<BranchPair> {
    params.validate()?;
    check_magnon(magnon_freq)?;
    from_squares(dicke_terms(params.cavity_freq, magnon_freq, params.coupling))
}

/// Rotating-wave approximation: the textbook anti-crossing.
pub fn rwa(params: &DispersionParams, magnon_freq: f64) -> Result<BranchPair> {
    params.validate()?;
    check_magnon(magnon_freq)?;
    let w = params.cavity_freq;
    let g = params.coupling;
    let mid = 0.5 * (w + magnon_freq);
    let half = (0.25 * (w - magnon_freq).powi(2) + g * g).sqrt();
    let lower = mid - half;
    if lower < 0.0 {
        return Err(Error::UnstableRegime { radicand: lower });
    }
    Ok(BranchPair { lower, upper: mid + half })
}

/// Superradiant-phase Dicke branches, valid for g/ω ≥ 1/2.
pub fn dicke_superradiant(params: &DispersionParams, magnon_freq: f64) -> Result<BranchPair> {
    params.validate()?;
    check_magnon(magnon_freq)?;
    let ratio = params.coupling_ratio();
    if ratio < 0.5 {
        return Err(Error::PhaseValidity { ratio });
    }
    from_squares(superradiant_terms(params.cavity_freq, magnon_freq, params.coupling))
}

/// Hopfield model with diamagnetic term D = g²/ω_m scaled by the prefactor d.
pub fn hopfield(params: &DispersionParams, magnon_freq: f64) -> Result<BranchPair> {
    params.validate()?;
    check_magnon(magnon_freq)?;
    let w = params.cavity_freq;
    let g = params.coupling;
    let d = params.hopfield_prefactor;
    let dia = if g == 0.0 || d == 0.0 {
        0.0
    } else if magnon_freq == 0.0 {
        return Err(Error::SingularDiamagnetic);
    } else {
        4.0 * d * (g * g / magnon_freq) * w
    };
    from_squares(hopfield_terms(w, magnon_freq, g, dia, params.hopfield_literal))
}

/// Dicke branches with the magnon frequency shifted by Δₘ.
pub fn shifted_dicke(params: &DispersionParams, magnon_freq: f64) -> Result<BranchPair> {
    params.validate()?;
    check_magnon(magnon_freq)?;
    from_squares(dicke_terms(params.cavity_freq, magnon_freq + params.magnon_shift, params.coupling))
}

/// Upper-branch offset above the cavity at zero applied field, assuming the
/// bare magnon frequency vanishes there.
pub fn zero_field_gap(params: &DispersionParams) -> Result<f64> {
    zero_field_gap_with(params, 0.0)
}

/// [`zero_field_gap`] with an explicit zero-field bare magnon frequency (GHz).
pub fn zero_field_gap_with(params: &DispersionParams, zero_field_magnon: f64) -> Result<f64> {
    if params.model != Model::ShiftedDicke {
        return Err(Error::ModelMismatch(format!(
            "zero-field gap is defined for shifted-dicke, got {}",
            params.model
        )));
    }
    params.validate()?;
    check_magnon(zero_field_magnon)?;
    // only the upper branch is needed; the lower one is usually unstable here
    let terms = dicke_terms(params.cavity_freq, zero_field_magnon + params.magnon_shift, params.coupling);
    let (upper_sq, _) = upper_lower_sq(terms);
    Ok(upper_sq.sqrt() - params.cavity_freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn p(model: Model, w: f64, g: f64) -> DispersionParams {
        DispersionParams::new(model, w, g)
    }

    #[test]
    fn dicke_uncoupled_and_zero_magnon() {
        let b = dicke_full(&p(Model::DickeFull, 5.0, 0.0), 3.0).unwrap();
        assert_abs_diff_eq!(b.lower, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.upper, 5.0, epsilon = 1e-14);
        let b = dicke_full(&p(Model::DickeFull, 5.0, 2.0), 0.0).unwrap();
        assert_abs_diff_eq!(b.lower, 0.0);
        assert_abs_diff_eq!(b.upper, 5.0, epsilon = 1e-14);
    }

    #[test]
    fn dicke_at_resonance() {
        let b = dicke_full(&p(Model::DickeFull, 7.65, 2.68), 7.65).unwrap();
        assert_abs_diff_eq!(b.lower, 4.185_510_721_524_913, epsilon = 1e-12);
        assert_abs_diff_eq!(b.upper, 9.976_296_908_171_889, epsilon = 1e-12);
    }

    #[test]
    fn dicke_unstable_regime() {
        // g/sqrt(ω ω_m) > 1/2
        let err = dicke_full(&p(Model::DickeFull, 1.0, 1.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::UnstableRegime { .. }));
    }

    #[test]
    fn degenerate_zero_frequencies() {
        let params = DispersionParams { cavity_freq: 1.0, ..p(Model::DickeFull, 1.0, 0.0) };
        let b = dicke_full(&params, 0.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 1.0));
    }

    #[test]
    fn rwa_examples() {
        let b = rwa(&p(Model::Rwa, 5.0, 0.1), 5.0).unwrap();
        assert_abs_diff_eq!(b.splitting(), 0.2, epsilon = 1e-14);
        let b = rwa(&p(Model::Rwa, 5.0, 0.0), 7.0).unwrap();
        assert_eq!((b.lower, b.upper), (5.0, 7.0));
        let params = p(Model::Rwa, 5.0, 0.05);
        let r = rwa(&params, 5.0).unwrap();
        let d = dicke_full(&params, 5.0).unwrap();
        assert_relative_eq!(r.lower, d.lower, max_relative = 0.01);
        assert_relative_eq!(r.upper, d.upper, max_relative = 0.01);
    }

    #[test]
    fn superradiant_examples() {
        let b = dicke_superradiant(&p(Model::DickeSuperradiant, 4.0, 2.0), 3.0).unwrap();
        assert_abs_diff_eq!(b.lower, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(b.upper, 5.0, epsilon = 1e-12);
        let b = dicke_superradiant(&p(Model::DickeSuperradiant, 4.75, 2.58), 0.0).unwrap();
        assert_abs_diff_eq!(b.lower, 0.0);
        assert_abs_diff_eq!(b.upper, 4.75, epsilon = 1e-12);
        assert!(matches!(
            dicke_superradiant(&p(Model::DickeSuperradiant, 5.0, 2.0), 3.0),
            Err(Error::PhaseValidity { .. })
        ));
    }

    #[test]
    fn hopfield_examples() {
        let params = p(Model::Hopfield, 5.0, 1.0);
        let b = hopfield(&params, 5.0).unwrap();
        assert_abs_diff_eq!(b.lower, 4.099_019_513_592_785, epsilon = 1e-12);
        assert_abs_diff_eq!(b.upper, 6.099_019_513_592_785, epsilon = 1e-12);

        let b0 = hopfield(&params.with_prefactor(0.0), 3.3).unwrap();
        let d = dicke_full(&params, 3.3).unwrap();
        assert_eq!(b0, d);

        let b = hopfield(&p(Model::Hopfield, 5.0, 0.0), 7.0).unwrap();
        assert_eq!((b.lower, b.upper), (5.0, 7.0));

        assert!(matches!(hopfield(&params, 0.0), Err(Error::SingularDiamagnetic)));
    }

    #[test]
    fn hopfield_literal_mode_differs() {
        let params = DispersionParams { hopfield_literal: true, ..p(Model::Hopfield, 5.0, 1.0) };
        let lit = hopfield(&params, 3.0).unwrap();
        let cor = hopfield(&DispersionParams { hopfield_literal: false, ..params }, 3.0).unwrap();
        assert!((lit.upper - cor.upper).abs() > 1e-3);
    }

    #[test]
    fn shifted_dicke_gap_rows() {
        let cav02a = DispersionParams::shifted(9.79, 2.72, 1.63);
        assert_abs_diff_eq!(zero_field_gap(&cav02a).unwrap(), 0.243_077_882_186_475, epsilon = 1e-12);
        // at zero field the lower branch of this row is unstable, the upper one is not
        assert!(matches!(shifted_dicke(&cav02a, 0.0), Err(Error::UnstableRegime { .. })));
        assert_abs_diff_eq!(cav02a.branches_relaxed(0.0).upper, 10.033_077_882_186_475, epsilon = 1e-12);
        let cav01f = DispersionParams::shifted(2.80, 1.64, 2.59);
        assert_abs_diff_eq!(zero_field_gap(&cav01f).unwrap(), 1.215_600_933_708_580, epsilon = 1e-12);
        let cav03a = DispersionParams::shifted(5.53, 0.65, 0.33);
        assert_abs_diff_eq!(zero_field_gap(&cav03a).unwrap(), 0.009_113_320_459_312, epsilon = 1e-12);
        let cav01a = DispersionParams::shifted(7.65, 2.68, 2.35);
        assert_abs_diff_eq!(zero_field_gap(&cav01a).unwrap(), 0.531_253_271_747_256, epsilon = 1e-12);
    }

    #[test]
    fn gap_vanishes_without_shift() {
        let params = DispersionParams::shifted(7.0, 2.0, 0.0);
        assert_abs_diff_eq!(zero_field_gap(&params).unwrap(), 0.0, epsilon = 1e-14);
        assert!(zero_field_gap(&params.with_model(Model::DickeFull)).is_err());
        let with_magnon = zero_field_gap_with(&params, 1.0).unwrap();
        assert!(with_magnon > 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(dicke_full(&p(Model::DickeFull, 0.0, 1.0), 1.0).is_err());
        assert!(dicke_full(&p(Model::DickeFull, 1.0, -1.0), 1.0).is_err());
        assert!(dicke_full(&p(Model::DickeFull, 1.0, 0.1), -1.0).is_err());
        assert!(rwa(&p(Model::Rwa, 1.0, 2.0), 1.0).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
        }
        assert!("jaynes".parse::<Model>().is_err());
    }

    #[test]
    fn relaxed_matches_strict_where_defined() {
        let params = DispersionParams::shifted(4.46, 2.03, 2.39);
        for wm in [2.0, 5.0, 12.0] {
            assert_eq!(params.branches_relaxed(wm), params.branches(wm).unwrap());
        }
        let relaxed = params.with_model(Model::DickeFull).branches_relaxed(0.5);
        assert_eq!(relaxed.lower, 0.0);
    }
}
