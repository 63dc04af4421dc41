//! Demagnetizing tensor of a uniformly magnetized rectangular prism.
//!
//! First-order Joseph–Schlömann expressions: the diagonal components are an
//! eight-term arccotangent sum, the off-diagonal ones a logarithm of a ratio
//! of eight corner terms. Both are evaluated pointwise in the prism frame,
//! with the prism centered on the origin and edges along the axes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::YIG_SATURATION_FIELD_T;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two axes perpendicular to `self`, in cyclic order.
    pub fn transverse(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "0" => Ok(Axis::X),
            "y" | "1" => Ok(Axis::Y),
            "z" | "2" => Ok(Axis::Z),
            other => Err(Error::Parse(format!("unknown axis `{other}`"))),
        }
    }
}

/// Rectangular prism sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGeometry {
    /// Half-edge lengths (a_x, a_y, a_z) in meters.
    pub half_dims: [f64; 3],
    /// μ₀Mₛ in tesla.
    pub saturation_field: f64,
    /// Axis of the static bias field.
    pub bias_axis: Axis,
}

impl SampleGeometry {
    pub fn new(half_dims: [f64; 3], saturation_field: f64, bias_axis: Axis) -> Result<Self> {
        if half_dims.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "half dimensions must be strictly positive, got {half_dims:?}"
            )));
        }
        if !(saturation_field.is_finite() && saturation_field >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "saturation field must be >= 0, got {saturation_field}"
            )));
        }
        Ok(Self { half_dims, saturation_field, bias_axis })
    }

    /// Builds a geometry from full edge lengths given in millimeters.
    pub fn from_edges_mm(edges_mm: [f64; 3], saturation_field: f64, bias_axis: Axis) -> Result<Self> {
        Self::new(edges_mm.map(|e| e * 0.5e-3), saturation_field, bias_axis)
    }

    /// The 3.82 × 6.09 × 0.61 mm³ YIG slab: thickness along x, length along
    /// y (parallel to the posts' row), 3.82 mm along the bias field z.
    pub fn yig_slab() -> Self {
        Self::from_edges_mm([0.61, 6.09, 3.82], YIG_SATURATION_FIELD_T, Axis::Z)
            .expect("constant geometry is valid")
    }

    pub fn min_half_dim(&self) -> f64 {
        self.half_dims.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_dims.iter().product::<f64>()
    }

    fn check_interior(&self, point: [f64; 3]) -> Result<()> {
        let margin = 1e-9 * self.min_half_dim();
        let inside = point
            .iter()
            .zip(self.half_dims.iter())
            .all(|(x, a)| x.is_finite() && x.abs() < a - margin);
        if inside {
            Ok(())
        } else {
            Err(Error::OutsideSample { x: point[0], y: point[1], z: point[2] })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    Point([f64; 3]),
    VolumeAveraged,
}

/// Dimensionless 3×3 demagnetizing tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemagTensor {
    pub components: [[f64; 3]; 3],
    pub eval_point: EvalPoint,
}

impl DemagTensor {
    pub fn from_parts(diag: [f64; 3], offdiag: [f64; 3], eval_point: EvalPoint) -> Self {
        let [xx, yy, zz] = diag;
        let [xy, yz, zx] = offdiag;
        Self { components: [[xx, xy, zx], [xy, yy, yz], [zx, yz, zz]], eval_point }
    }

    /// Diagonal tensor, e.g. for ellipsoids with known factors.
    pub fn diagonal(diag: [f64; 3]) -> Self {
        Self::from_parts(diag, [0.0; 3], EvalPoint::Point([0.0; 3]))
    }

    /// The demagnetizing tensor of a sphere.
    pub fn sphere() -> Self {
        Self::diagonal([1.0 / 3.0; 3])
    }

    pub fn get(&self, i: Axis, j: Axis) -> f64 {
        self.components[i.index()][j.index()]
    }

    pub fn diag(&self) -> [f64; 3] {
        [self.components[0][0], self.components[1][1], self.components[2][2]]
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.components;
        if c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("demagnetizing tensor has non-finite entries".into()));
        }
        if (self.trace() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("demagnetizing trace {} != 1", self.trace())));
        }
        if self.diag().iter().any(|d| !(-1e-12..=1.0 + 1e-12).contains(d)) {
            return Err(Error::InvalidInput("diagonal demagnetizing factor outside [0, 1]".into()));
        }
        for i in 0..3 {
            for j in 0..i {
                if (c[i][j] - c[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("demagnetizing tensor is not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Arccotangent on the (0, π) branch.
pub(crate) fn acot(v: f64) -> f64 {
    if v > 0.0 {
        (1.0 / v).atan()
    } else if v < 0.0 {
        PI + (1.0 / v).atan()
    } else {
        0.5 * PI
    }
}

fn diag_component(a: [f64; 3], x: [f64; 3], k: usize) -> f64 {
    let i = (k + 1) % 3;
    let j = (k + 2) % 3;
    let mut sum = 0.0;
    for si in [1.0, -1.0] {
        for sj in [1.0, -1.0] {
            for sk in [1.0, -1.0] {
                let di = a[i] - si * x[i];
                let dj = a[j] - sj * x[j];
                let dk = a[k] - sk * x[k];
                let r = (di * di + dj * dj + dk * dk).sqrt();
                sum += acot(r * dk / (di * dj));
            }
        }
    }
    sum / (4.0 * PI)
}

fn offdiag_component(a: [f64; 3], x: [f64; 3], i: usize, k: usize) -> f64 {
    let j = 3 - i - k;
    // corner (si·a_i, sj·a_j, sk·a_k)
    let g = |si: f64, sj: f64, sk: f64| {
        let di = si * a[i] - x[i];
        let dj = sj * a[j] - x[j];
        let dk = sk * a[k] - x[k];
        dj + (di * di + dj * dj + dk * dk).sqrt()
    };
    // even number of sign flips on top, odd on the bottom
    let num = g(1.0, 1.0, 1.0).ln() + g(-1.0, -1.0, 1.0).ln() + g(-1.0, 1.0, -1.0).ln() + g(1.0, -1.0, -1.0).ln();
    let den = g(-1.0, 1.0, 1.0).ln() + g(1.0, -1.0, 1.0).ln() + g(1.0, 1.0, -1.0).ln() + g(-1.0, -1.0, -1.0).ln();
    -(num - den) / (4.0 * PI)
}

/// Diagonal components (N_xx, N_yy, N_zz) at an interior point.
pub fn demag_diag(geom: &SampleGeometry, point: [f64; 3]) -> Result<[f64; 3]> {
    geom.check_interior(point)?;
    Ok([0, 1, 2].map(|k| diag_component(geom.half_dims, point, k)))
}

/// Off-diagonal components (N_xy, N_yz, N_zx) at an interior point.
pub fn demag_offdiag(geom: &SampleGeometry, point: [f64; 3]) -> Result<[f64; 3]> {
    geom.check_interior(point)?;
    let a = geom.half_dims;
    Ok([
        offdiag_component(a, point, 0, 1),
        offdiag_component(a, point, 1, 2),
        offdiag_component(a, point, 2, 0),
    ])
}

pub fn demag_tensor(geom: &SampleGeometry, point: [f64; 3]) -> Result<DemagTensor> {
    let diag = demag_diag(geom, point)?;
    let off = demag_offdiag(geom, point)?;
    Ok(DemagTensor::from_parts(diag, off, EvalPoint::Point(point)))
}

/// Tensor at the prism center, where the off-diagonal terms vanish.
pub fn demag_center(geom: &SampleGeometry) -> DemagTensor {
    demag_tensor(geom, [0.0; 3]).expect("center is always interior")
}

/// Midpoint-rule average of the pointwise tensor over an n³ grid.
///
/// Slabs along x are evaluated in parallel and reduced in index order, so
/// the result does not depend on the thread count.
pub fn demag_volume_average(geom: &SampleGeometry, grid_resolution: usize) -> Result<DemagTensor> {
    if grid_resolution < 2 {
        return Err(Error::Precondition(format!(
            "grid resolution must be >= 2, got {grid_resolution}"
        )));
    }
    let n = grid_resolution;
    let a = geom.half_dims;
    let coord = |axis: usize, idx: usize| -a[axis] + (idx as f64 + 0.5) * 2.0 * a[axis] / n as f64;

    let slabs: Vec<[f64; 6]> = (0..n)
        .into_par_iter()
        .map(|ix| {
            let mut acc = [0.0; 6];
            let x = coord(0, ix);
            for iy in 0..n {
                let y = coord(1, iy);
                for iz in 0..n {
                    let p = [x, y, coord(2, iz)];
                    for (k, slot) in acc.iter_mut().take(3).enumerate() {
                        *slot += diag_component(a, p, k);
                    }
                    acc[3] += offdiag_component(a, p, 0, 1);
                    acc[4] += offdiag_component(a, p, 1, 2);
                    acc[5] += offdiag_component(a, p, 2, 0);
                }
            }
            acc
        })
        .collect();

    let mut total = [0.0; 6];
    for slab in &slabs {
        for (t, s) in total.iter_mut().zip(slab) {
            *t += s;
        }
    }
    let count = (n * n * n) as f64;
    let avg = total.map(|t| t / count);
    Ok(DemagTensor::from_parts(
        [avg[0], avg[1], avg[2]],
        [avg[3], avg[4], avg[5]],
        EvalPoint::VolumeAveraged,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cube() -> SampleGeometry {
        SampleGeometry::new([1e-3; 3], 0.176, Axis::Z).unwrap()
    }

    #[test]
    fn cube_center_is_one_third() {
        let n = demag_diag(&cube(), [0.0; 3]).unwrap();
        for v in n {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn center_offdiagonals_vanish() {
        let geom = SampleGeometry::yig_slab();
        let off = demag_offdiag(&geom, [0.0; 3]).unwrap();
        for v in off {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn slab_center_values() {
        let n = demag_diag(&SampleGeometry::yig_slab(), [0.0; 3]).unwrap();
        assert_abs_diff_eq!(n[0], 0.880_972_240_247_484_4, epsilon = 1e-9);
        assert_abs_diff_eq!(n[1], 0.033_730_916_629_629_2, epsilon = 1e-9);
        assert_abs_diff_eq!(n[2], 0.085_296_843_122_886_6, epsilon = 1e-9);
    }

    #[test]
    fn mirror_symmetry_of_offdiagonals() {
        let geom = SampleGeometry::yig_slab();
        let p = [0.1e-3, 0.5e-3, 0.2e-3];
        let a = demag_offdiag(&geom, p).unwrap();
        // [xy, yz, zx]
        assert_abs_diff_eq!(a[0], -0.000_516_603_442_868, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], -0.000_576_930_591_550, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], -0.001_034_134_746_706, epsilon = 1e-12);
        let inverted = demag_offdiag(&geom, p.map(|v| -v)).unwrap();
        for (u, v) in a.iter().zip(inverted) {
            assert_abs_diff_eq!(*u, v, epsilon = 1e-14);
        }
        let flipped_x = demag_offdiag(&geom, [-p[0], p[1], p[2]]).unwrap();
        assert_abs_diff_eq!(flipped_x[0], -a[0], epsilon = 1e-14);
        assert_abs_diff_eq!(flipped_x[1], a[1], epsilon = 1e-14);
        assert_abs_diff_eq!(flipped_x[2], -a[2], epsilon = 1e-14);
    }

    #[test]
    fn boundary_and_outside_points_are_rejected() {
        let geom = cube();
        assert!(matches!(demag_diag(&geom, [1e-3, 0.0, 0.0]), Err(Error::OutsideSample { .. })));
        assert!(demag_offdiag(&geom, [0.0, 2e-3, 0.0]).is_err());
        assert!(demag_diag(&geom, [0.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn acot_branch_stays_in_zero_pi() {
        assert_abs_diff_eq!(acot(1.0), PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(acot(-1.0), 3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(acot(0.0), PI / 2.0);
        assert!(acot(-1e-9) < PI && acot(1e9) > 0.0);
    }

    #[test]
    fn cube_volume_average() {
        let t = demag_volume_average(&cube(), 64).unwrap();
        for v in t.diag() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(t.trace(), 1.0, epsilon = 1e-9);
        assert_eq!(t.eval_point, EvalPoint::VolumeAveraged);
    }

    #[test]
    fn slab_volume_average_offdiagonals_cancel() {
        let t = demag_volume_average(&SampleGeometry::yig_slab(), 16).unwrap();
        t.validate().unwrap();
        assert!(t.components[0][1].abs() < 1e-9);
        assert!(t.components[1][2].abs() < 1e-9);
        assert!(t.components[2][0].abs() < 1e-9);
        // averaging lowers the thickness factor relative to the center value
        assert!(t.components[0][0] < 0.8809722);
    }

    #[test]
    fn volume_average_needs_two_points() {
        assert!(demag_volume_average(&cube(), 1).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(SampleGeometry::new([1.0, 0.0, 1.0], 0.1, Axis::Z).is_err());
        assert!(SampleGeometry::new([1.0, 1.0, 1.0], -0.1, Axis::Z).is_err());
        assert_eq!("Y".parse::<Axis>().unwrap(), Axis::Y);
        assert!("w".parse::<Axis>().is_err());
    }
}
