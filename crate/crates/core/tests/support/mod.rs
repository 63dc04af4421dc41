//! Independent reference implementations used by the integration tests.
#![allow(dead_code, clippy::excessive_precision)]

use std::f64::consts::PI;

use nalgebra::{Matrix2, SymmetricEigen};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature by recursive bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth > 40 {
            return val;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// Demagnetizing tensor at `p` inside the prism |x_k| < half_dims[k], from
/// the field of unit surface charges on each face.
pub fn demag_surface_integral(half_dims: [f64; 3], p: [f64; 3]) -> [[f64; 3]; 3] {
    let mut n = [[0.0; 3]; 3];
    let scale = half_dims.iter().fold(0.0f64, |m, &v| m.max(v));
    for k in 0..3 {
        let (u_ax, v_ax) = ((k + 1) % 3, (k + 2) % 3);
        for sign in [1.0, -1.0] {
            let face = sign * half_dims[k];
            for i in 0..3 {
                let inner = |u: f64| {
                    let f = |v: f64| {
                        let mut q = [0.0; 3];
                        q[k] = face;
                        q[u_ax] = u;
                        q[v_ax] = v;
                        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        d[i] / (r2 * r2.sqrt())
                    };
                    integrate(&f, -half_dims[v_ax], half_dims[v_ax], 1e-13 / scale)
                };
                let val = integrate(&inner, -half_dims[u_ax], half_dims[u_ax], 1e-12);
                n[i][k] -= sign * val / (4.0 * PI);
            }
        }
    }
    n
}

/// Dicke normal-mode frequencies from the symmetrized dynamical matrix of two
/// coupled oscillators with position coupling.
pub fn dicke_normal_modes(cavity: f64, magnon: f64, g: f64) -> (f64, f64) {
    let c = 2.0 * g * (cavity * magnon).sqrt();
    let k = Matrix2::new(cavity * cavity, c, c, magnon * magnon);
    let eig = SymmetricEigen::new(k);
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo.max(0.0).sqrt(), hi.sqrt())
}

/// Straightforward RWA normal modes from the 2×2 Hermitian coupling matrix.
pub fn rwa_normal_modes(cavity: f64, magnon: f64, g: f64) -> (f64, f64) {
    let eig = SymmetricEigen::new(Matrix2::new(cavity, g, g, magnon));
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    if a < b { (a, b) } else { (b, a) }
}
