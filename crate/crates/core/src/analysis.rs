//! Cross-cavity analyses: magnon-shift scaling regressions, zero-field gap
//! curves and the JSON/SVG report.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::{classify_regime, table_consistency, Regime};
use crate::dispersion::{zero_field_gap, DispersionParams};
use crate::fit::FitResult;
use crate::fmr::linspace;
use crate::svg::{Plot, Series};
use crate::{Error, Result};

/// Measured cavity parameters as tabulated (bundled copy).
pub const BUNDLED_TABLES: &str = include_str!("../data/tables.csv");

/// Rounding tolerance of the two-decimal table columns.
pub const TABLE_TOLERANCE: f64 = 0.01;
pub const GAP_TOLERANCE: f64 = 0.08;
pub const GAP_TIGHT_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityRecord {
    pub label: String,
    /// Post to lid distance in micrometres, where tabulated.
    #[serde(rename = "d_um")]
    pub d_gap_um: Option<f64>,
    #[serde(rename = "f_DM")]
    pub f_dm: f64,
    #[serde(rename = "f_BM")]
    pub f_bm: f64,
    /// g/2π in GHz.
    #[serde(rename = "g_2pi")]
    pub g: f64,
    #[serde(rename = "g_over_w")]
    pub printed_g_over_w: f64,
    #[serde(rename = "g2_over_2piw")]
    pub printed_g2_over_w: f64,
    pub delta_m: f64,
    pub f_gap: f64,
}

impl CavityRecord {
    pub fn validate(&self) -> Result<()> {
        let freqs = [self.f_dm, self.f_bm, self.g, self.delta_m, self.f_gap];
        if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidInput(format!("{}: frequencies must be positive", self.label)));
        }
        if self.f_dm >= self.f_bm {
            return Err(Error::InvalidInput(format!(
                "{}: dark mode {} GHz must lie below the bright mode {} GHz",
                self.label, self.f_dm, self.f_bm
            )));
        }
        Ok(())
    }

    pub fn dispersion(&self) -> DispersionParams {
        DispersionParams::shifted(self.f_bm, self.g, self.delta_m)
    }

    pub fn g_over_w(&self) -> f64 {
        self.g / self.f_bm
    }

    /// Cavity family, the label up to the parenthesised suffix.
    pub fn family(&self) -> &str {
        self.label.split('(').next().unwrap_or(&self.label).trim()
    }
}

pub fn read_tables<R: Read>(reader: R) -> Result<Vec<CavityRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: CavityRecord = row.map_err(|e| Error::Parse(format!("tables: {e}")))?;
        rec.validate()?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Parse("tables: no rows".into()));
    }
    Ok(out)
}

pub fn load_tables(path: &Path) -> Result<Vec<CavityRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tables(file)
}

pub fn bundled_tables() -> Vec<CavityRecord> {
    read_tables(BUNDLED_TABLES.as_bytes()).expect("bundled tables parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// Least-squares parabola y = a·x² + b·x + c.
///
/// Points are sorted first so the result does not depend on input order. The
/// abscissa is centred and scaled before the QR solve.
pub fn quadratic_regression(points: &[(f64, f64)]) -> Result<Quadratic> {
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidInput("regression points must be finite".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::RankDeficient { parameter: "a".into() });
    }
    let n = pts.len();
    let lo = xs[0];
    let hi = xs[xs.len() - 1];
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let u = (pts[i].0 - mid) / half;
        u.powi(2 - j as i32)
    });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    let qr = design.clone().qr();
    let r = qr.r();
    if (0..3).any(|k| r[(k, k)].abs() < 1e-12 * (n as f64).sqrt()) {
        return Err(Error::RankDeficient { parameter: "a".into() });
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { parameter: "a".into() })?;
    // back to the original abscissa: u = (x − m)/h
    let (au, bu, cu) = (coef[0], coef[1], coef[2]);
    let a = au / (half * half);
    let b = bu / half - 2.0 * au * mid / (half * half);
    let c = cu - bu * mid / half + au * mid * mid / (half * half);

    let fitted = &design * &coef;
    let mean = y.mean();
    let ss_res: f64 = (&y - fitted).norm_squared();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(Quadratic { a, b, c, r_squared, n })
}

/// (g/ω, Δ_g/ω) along a sweep of g/ω at fixed cavity frequency and shift.
pub fn gap_curve(cavity_freq: f64, delta_m: f64, ratios: &[f64]) -> Result<Vec<(f64, f64)>> {
    ratios
        .iter()
        .map(|&r| {
            let gap = zero_field_gap(&DispersionParams::shifted(cavity_freq, r * cavity_freq, delta_m))?;
            Ok((r, gap / cavity_freq))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub label: String,
    pub g_over_w: f64,
    pub g_over_w_residual: f64,
    pub g2_over_w: f64,
    pub g2_over_w_residual: f64,
    pub gap: f64,
    pub gap_residual: f64,
    pub regime: Regime,
    pub consistent: bool,
    pub gap_within_tolerance: bool,
}

pub fn check_row(rec: &CavityRecord) -> Result<RowCheck> {
    let (gw, g2w) = table_consistency(rec.g, rec.f_bm)?;
    let gap = zero_field_gap(&rec.dispersion())?;
    let gw_res = gw - rec.printed_g_over_w;
    let g2w_res = g2w - rec.printed_g2_over_w;
    let gap_res = gap - rec.f_gap;
    // small slack for binary rounding of values that sit exactly on the boundary
    let tol = TABLE_TOLERANCE + 1e-9;
    Ok(RowCheck {
        label: rec.label.clone(),
        g_over_w: gw,
        g_over_w_residual: gw_res,
        g2_over_w: g2w,
        g2_over_w_residual: g2w_res,
        gap,
        gap_residual: gap_res,
        regime: classify_regime(gw),
        consistent: gw_res.abs() <= tol && g2w_res.abs() <= tol,
        gap_within_tolerance: gap_res.abs() <= GAP_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    #[serde(flatten)]
    pub result: FitResult,
    pub g_over_w: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<RowCheck>,
    pub rows_consistent: usize,
    pub gaps_within_tolerance: usize,
    pub gaps_within_tight_tolerance: usize,
    /// Δₘ/ω against g/ω.
    pub shift_ratio_regression: Quadratic,
    /// Δₘ against g²/ω.
    pub shift_vs_g2_regression: Quadratic,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub fits: Vec<FitSummary>,
}

impl Report {
    pub fn all_consistent(&self) -> bool {
        self.rows_consistent == self.rows.len() && self.gaps_within_tolerance == self.rows.len()
    }
}

pub fn build_report(records: &[CavityRecord], fits: &[FitResult]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::InvalidInput("report needs at least one table row".into()));
    }
    let rows: Vec<RowCheck> = records.iter().map(check_row).collect::<Result<_>>()?;
    let ratio_pts: Vec<(f64, f64)> = records.iter().map(|r| (r.g_over_w(), r.delta_m / r.f_bm)).collect();
    let g2_pts: Vec<(f64, f64)> = records.iter().map(|r| (r.g * r.g / r.f_bm, r.delta_m)).collect();
    let fits = fits
        .iter()
        .map(|f| {
            let gw = f.params.g / f.params.f_bm;
            FitSummary { result: f.clone(), g_over_w: gw, regime: classify_regime(gw) }
        })
        .collect();
    Ok(Report {
        rows_consistent: rows.iter().filter(|r| r.consistent).count(),
        gaps_within_tolerance: rows.iter().filter(|r| r.gap_within_tolerance).count(),
        gaps_within_tight_tolerance: rows.iter().filter(|r| r.gap_residual.abs() <= GAP_TIGHT_TOLERANCE).count(),
        rows,
        shift_ratio_regression: quadratic_regression(&ratio_pts)?,
        shift_vs_g2_regression: quadratic_regression(&g2_pts)?,
        fits,
    })
}

fn families(records: &[CavityRecord]) -> BTreeMap<&str, Vec<&CavityRecord>> {
    let mut map: BTreeMap<&str, Vec<&CavityRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.family()).or_default().push(r);
    }
    map
}

/// SVG documents keyed by file name.
pub fn report_plots(records: &[CavityRecord], report: &Report) -> Result<Vec<(String, String)>> {
    let fams = families(records);
    let max_ratio = records.iter().map(|r| r.g_over_w()).fold(0.0, f64::max);
    let xs = linspace(0.0, (max_ratio * 1.15).max(0.1), 120);

    let mut ratio = Plot::new("Magnon shift against coupling ratio", "g/ω", "Δm/ω");
    for (fam, recs) in &fams {
        ratio = ratio.with(Series::markers(*fam, recs.iter().map(|r| (r.g_over_w(), r.delta_m / r.f_bm)).collect()));
    }
    let q = report.shift_ratio_regression;
    ratio = ratio.with(Series::line("quadratic fit", xs.iter().map(|&x| (x, q.eval(x))).collect()));

    let mut g2 = Plot::new("Magnon shift against g²/ω", "g²/ω (GHz)", "Δm (GHz)");
    for (fam, recs) in &fams {
        g2 = g2.with(Series::markers(*fam, recs.iter().map(|r| (r.g * r.g / r.f_bm, r.delta_m)).collect()));
    }
    let max_g2 = records.iter().map(|r| r.g * r.g / r.f_bm).fold(0.0, f64::max);
    let q2 = report.shift_vs_g2_regression;
    g2 = g2.with(Series::line(
        "quadratic fit",
        linspace(0.0, max_g2 * 1.1, 120).into_iter().map(|x| (x, q2.eval(x))).collect(),
    ));

    let mut gaps = Plot::new("Zero-field gap", "g/ω", "Δg/ω");
    for (fam, recs) in &fams {
        let shift_ratios: Vec<f64> = recs.iter().map(|r| r.delta_m / r.f_bm).collect();
        let shift = crate::numeric::median(&shift_ratios).unwrap_or(0.0);
        // unit cavity frequency: the curve is homogeneous
        gaps = gaps.with(Series::line(format!("{fam} model"), gap_curve(1.0, shift, &xs)?));
        gaps = gaps.with(Series::markers(
            format!("{fam} tables"),
            recs.iter().map(|r| (r.g_over_w(), r.f_gap / r.f_bm)).collect(),
        ));
    }

    Ok(vec![
        ("shift_ratio.svg".into(), ratio.render()),
        ("shift_vs_g2.svg".into(), g2.render()),
        ("gap_curves.svg".into(), gaps.render()),
    ])
}

/// Writes `report.json` content to `json_path` and the plots into `plot_dir`.
/// Returns the paths written.
pub fn write_report(
    records: &[CavityRecord],
    fits: &[FitResult],
    json_path: &Path,
    plot_dir: Option<&Path>,
) -> Result<(Report, Vec<PathBuf>)> {
    let report = build_report(records, fits)?;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(parent) = json_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))?;
    written.push(json_path.to_path_buf());
    if let Some(dir) = plot_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, svg) in report_plots(records, &report)? {
            let path = dir.join(name);
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok((report, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bundled_tables_have_fourteen_rows() {
        let t = bundled_tables();
        assert_eq!(t.len(), 14);
        assert_eq!(t[0].d_gap_um, Some(116.0));
        assert_eq!(t[6].d_gap_um, None);
        assert_eq!(t[4].family(), "CAV01");
    }

    #[test]
    fn exact_parabola() {
        let pts: Vec<(f64, f64)> = (0..9).map(|i| {
            let x = 0.1 * i as f64 - 0.2;
            (x, 3.0 * x * x - 2.0 * x + 0.5)
        }).collect();
        let q = quadratic_regression(&pts).unwrap();
        assert_abs_diff_eq!(q.a, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.b, -2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.c, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(q.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_data() {
        let q = quadratic_regression(&[(0.0, 2.0), (1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(q.a, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.c, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_design() {
        assert!(matches!(
            quadratic_regression(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn gap_curve_zero_coupling() {
        let c = gap_curve(1.0, 0.4, &[0.0]).unwrap();
        assert_eq!(c[0].1, 0.0);
        let c = gap_curve(1.0, 1.5, &[0.0]).unwrap();
        assert_abs_diff_eq!(c[0].1, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gap_curve_increases_with_coupling() {
        let c = gap_curve(1.0, 0.3, &linspace(0.0, 0.8, 50)).unwrap();
        assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn report_over_tables() {
        let t = bundled_tables();
        let r = build_report(&t, &[]).unwrap();
        assert_eq!(r.rows.len(), 14);
        assert_eq!(r.rows_consistent, 14);
        assert_eq!(r.gaps_within_tolerance, 14);
        assert!(r.gaps_within_tight_tolerance >= 10);
        assert!(r.rows.iter().all(|row| row.regime == Regime::Usc));
        assert!(r.shift_ratio_regression.a > 0.0);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("fits").is_none());
    }

    #[test]
    fn frozen_gaps() {
        let t = bundled_tables();
        let gap = |label: &str| check_row(t.iter().find(|r| r.label == label).unwrap()).unwrap().gap;
        assert_abs_diff_eq!(gap("CAV02(a)"), 0.243_077_882_186_475, epsilon = 1e-12);
        assert_abs_diff_eq!(gap("CAV01(f)"), 1.215_600_933_708_580, epsilon = 1e-12);
        assert_abs_diff_eq!(gap("CAV03(a)"), 0.009_113_320_459_312, epsilon = 1e-12);
    }

    #[test]
    fn plots_are_reproducible() {
        let t = bundled_tables();
        let r = build_report(&t, &[]).unwrap();
        let a = report_plots(&t, &r).unwrap();
        let b = report_plots(&t, &r).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn rejects_bad_rows() {
        let csv = "label,d_um,f_DM,f_BM,g_2pi,g_over_w,g2_over_2piw,delta_m,f_gap\nX,,5.0,4.0,1,0.25,0.25,1,0.1\n";
        assert!(read_tables(csv.as_bytes()).is_err());
        let empty = "label,d_um,f_DM,f_BM,g_2pi,g_over_w,g2_over_2piw,delta_m,f_gap\n";
        assert!(read_tables(empty.as_bytes()).is_err());
    }

    #[test]
    fn write_failures_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_report(&bundled_tables(), &[], &blocker.join("r.json"), None).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
