//! Synthetic |S21| maps and polariton branch extraction.
//!
//! Synthesis places unit-peak Lorentzians exactly at the model branch
//! frequencies; amplitudes follow the photonic fraction of each branch.
//! Extraction finds per-column maxima, refines them with a three-point
//! parabola and labels them by frequency ordering plus column-to-column
//! continuity.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionParams, Model};
use crate::fmr::{fmr_frequency, linspace, FmrParams};
use crate::numeric::median;
use crate::{Error, Result};

/// |S21| in dB on a (field × frequency) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    /// Applied field, tesla.
    pub field_values: Vec<f64>,
    /// Probe frequency, GHz.
    pub freq_values: Vec<f64>,
    /// Shape (fields, freqs).
    pub magnitude_db: Array2<f64>,
    pub metadata: SpectrumMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Field indices where the FMR is unsaturated; only photon lines drawn.
    pub masked_fields: Vec<usize>,
    /// Field indices where the lower branch is outside the model's stable regime.
    pub unstable_lower_fields: Vec<usize>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite())
}

impl Spectrum2D {
    pub fn new(field_values: Vec<f64>, freq_values: Vec<f64>, magnitude_db: Array2<f64>) -> Result<Self> {
        let spec = Self { field_values, freq_values, magnitude_db, metadata: SpectrumMeta::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !strictly_increasing(&self.field_values) || !strictly_increasing(&self.freq_values) {
            return Err(Error::InvalidInput("spectrum axes must be strictly increasing".into()));
        }
        if self.magnitude_db.dim() != (self.field_values.len(), self.freq_values.len()) {
            return Err(Error::InvalidInput(format!(
                "magnitude shape {:?} does not match axes ({}, {})",
                self.magnitude_db.dim(),
                self.field_values.len(),
                self.freq_values.len()
            )));
        }
        if self.magnitude_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spectrum magnitude must be finite".into()));
        }
        Ok(())
    }

    /// Frequency spacing of the first two samples.
    pub fn freq_step(&self) -> f64 {
        if self.freq_values.len() < 2 {
            0.0
        } else {
            self.freq_values[1] - self.freq_values[0]
        }
    }

    /// CSV layout: header `field_mT,<f0>,<f1>,...` in GHz, one row per field in mT.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["field_mT".to_string()];
        header.extend(self.freq_values.iter().map(|f| format!("{f}")));
        w.write_record(&header).map_err(csv_err)?;
        for (row, h) in self.magnitude_db.rows().into_iter().zip(&self.field_values) {
            let mut rec = vec![format!("{}", h * 1e3)];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let freq_values = header
            .iter()
            .skip(1)
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        let mut fields = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != freq_values.len() + 1 {
                return Err(Error::Parse(format!(
                    "row has {} cells, expected {}",
                    rec.len(),
                    freq_values.len() + 1
                )));
            }
            fields.push(parse_f64(&rec[0])? * 1e-3);
            for cell in rec.iter().skip(1) {
                values.push(parse_f64(cell)?);
            }
        }
        let magnitude = Array2::from_shape_vec((fields.len(), freq_values.len()), values)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(fields, freq_values, magnitude)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

/// Axes of a synthetic spectrum: fields in tesla, frequencies in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub field_start: f64,
    pub field_stop: f64,
    pub field_steps: usize,
    pub freq_start: f64,
    pub freq_stop: f64,
    pub freq_steps: usize,
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.field_steps < 1 || self.freq_steps < 3 {
            return Err(Error::InvalidInput("grid needs >= 1 field and >= 3 frequency samples".into()));
        }
        if (self.field_steps > 1 && self.field_stop <= self.field_start) || self.freq_stop <= self.freq_start {
            return Err(Error::InvalidInput("grid axes must be increasing".into()));
        }
        Ok(())
    }
}

/// Half widths at half maximum, GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linewidths {
    pub cavity: f64,
    pub magnon: f64,
    pub dark: f64,
}

impl Default for Linewidths {
    fn default() -> Self {
        Self { cavity: 0.03, magnon: 0.03, dark: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Dark-mode frequency, GHz.
    pub dm_freq: f64,
    pub linewidths: Linewidths,
    pub dark_weight: f64,
    /// Constant background level, dB.
    pub noise_floor_db: f64,
    /// Peak-to-noise ratio for additive Gaussian noise; `None` is noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dm_freq: 1.0,
            linewidths: Linewidths::default(),
            dark_weight: 0.5,
            noise_floor_db: -60.0,
            snr_db: None,
            seed: 0,
        }
    }
}

fn lorentzian(f: f64, center: f64, hwhm: f64) -> f64 {
    let x = (f - center) / hwhm;
    1.0 / (1.0 + x * x)
}

/// Photonic fractions (lower, upper) from the mixing angle tan 2θ = 2g/(ω_m − ω).
pub fn photonic_fractions(cavity_freq: f64, coupling: f64, magnon_eff: f64) -> (f64, f64) {
    let theta = 0.5 * (2.0 * coupling).atan2(magnon_eff - cavity_freq);
    let c2 = theta.cos().powi(2);
    (c2, 1.0 - c2)
}

struct Line {
    center: f64,
    hwhm: f64,
    weight: f64,
}

/// Renders a (field × frequency) |S21| map from the dispersion model.
pub fn synthesize(model: &DispersionParams, fmr: &FmrParams, config: &SynthConfig, grid: &GridSpec) -> Result<Spectrum2D> {
    model.validate()?;
    grid.validate()?;
    let lw = config.linewidths;
    if [lw.cavity, lw.magnon, lw.dark].iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("linewidths must be > 0".into()));
    }
    let fields = linspace(grid.field_start, grid.field_stop, grid.field_steps);
    let freqs = linspace(grid.freq_start, grid.freq_stop, grid.freq_steps);
    let floor = 10f64.powf(config.noise_floor_db / 20.0);
    let sigma = config.snr_db.map(|snr| 10f64.powf(-snr / 20.0));
    let shift = if model.model == Model::ShiftedDicke { model.magnon_shift } else { 0.0 };

    struct Column {
        values: Vec<f64>,
        masked: bool,
        unstable: bool,
    }

    let columns: Vec<Column> = fields
        .par_iter()
        .enumerate()
        .map(|(idx, &h)| -> Result<Column> {
            let mut lines = vec![Line { center: config.dm_freq, hwhm: lw.dark, weight: config.dark_weight }];
            let mut masked = false;
            let mut unstable = false;
            match fmr_frequency(h, fmr) {
                Err(Error::Unsaturated { .. }) => {
                    masked = true;
                    lines.push(Line { center: model.cavity_freq, hwhm: lw.cavity, weight: 1.0 });
                }
                Err(e) => return Err(e),
                Ok(wm) => {
                    let (lower, upper) = match model.branches(wm) {
                        Ok(pair) => (Some(pair.lower), pair.upper),
                        Err(Error::UnstableRegime { .. }) => {
                            unstable = true;
                            (None, model.branches_relaxed(wm).upper)
                        }
                        Err(e) => return Err(e),
                    };
                    let (c2, s2) = photonic_fractions(model.cavity_freq, model.coupling, wm + shift);
                    if let Some(lower) = lower {
                        lines.push(Line { center: lower, hwhm: c2 * lw.cavity + s2 * lw.magnon, weight: c2 });
                    }
                    lines.push(Line { center: upper, hwhm: s2 * lw.cavity + c2 * lw.magnon, weight: s2 });
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(idx as u64);
            let normal = sigma.map(|s| Normal::new(0.0, s).expect("finite sigma"));
            let values = freqs
                .iter()
                .map(|&f| {
                    let mut m: f64 = lines.iter().map(|l| l.weight * lorentzian(f, l.center, l.hwhm)).sum();
                    m += floor;
                    if let Some(n) = &normal {
                        m += n.sample(&mut rng);
                    }
                    20.0 * m.abs().max(1e-12).log10()
                })
                .collect();
            Ok(Column { values, masked, unstable })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut magnitude = Array2::zeros((fields.len(), freqs.len()));
    let mut meta = SpectrumMeta::default();
    for (i, col) in columns.into_iter().enumerate() {
        magnitude.row_mut(i).assign(&ndarray::Array1::from(col.values));
        if col.masked {
            meta.masked_fields.push(i);
        }
        if col.unstable {
            meta.unstable_lower_fields.push(i);
        }
    }
    let mut spec = Spectrum2D::new(fields, freqs, magnitude)?;
    spec.metadata = meta;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    Lower,
    Upper,
    Dark,
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchLabel::Lower => "lower",
            BranchLabel::Upper => "upper",
            BranchLabel::Dark => "dark",
        })
    }
}

impl FromStr for BranchLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower" | "-" => Ok(BranchLabel::Lower),
            "upper" | "+" => Ok(BranchLabel::Upper),
            "dark" | "dm" => Ok(BranchLabel::Dark),
            other => Err(Error::Parse(format!("unknown branch label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Applied field, tesla.
    pub field: f64,
    /// GHz.
    pub freq: f64,
    pub label: BranchLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchData {
    pub points: Vec<BranchPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchRow {
    #[serde(rename = "field_mT")]
    field_mt: f64,
    #[serde(rename = "freq_GHz")]
    freq_ghz: f64,
    label: BranchLabel,
}

impl BranchData {
    pub fn new(points: Vec<BranchPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: BranchLabel) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    pub fn with_label(&self, label: BranchLabel) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(move |p| p.label == label)
    }

    /// Checks that lower < upper wherever both exist at the same field.
    pub fn validate(&self) -> Result<()> {
        for p in self.with_label(BranchLabel::Lower) {
            for q in self.with_label(BranchLabel::Upper) {
                if p.field == q.field && p.freq >= q.freq {
                    return Err(Error::InvalidInput(format!(
                        "lower branch {} GHz above upper {} GHz at {} T",
                        p.freq, q.freq, p.field
                    )));
                }
            }
        }
        if self.points.iter().any(|p| !(p.field.is_finite() && p.freq.is_finite())) {
            return Err(Error::InvalidInput("branch data must be finite".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(BranchRow { field_mt: p.field * 1e3, freq_ghz: p.freq, label: p.label })
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let points = r
            .deserialize::<BranchRow>()
            .map(|row| {
                let row = row.map_err(csv_err)?;
                Ok(BranchPoint { field: row.field_mt * 1e-3, freq: row.freq_ghz, label: row.label })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = Self { points };
        data.validate()?;
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Minimum peak height above the median level of the whole map, dB.
    pub threshold_db: f64,
    /// Largest frequency jump (GHz) between adjacent columns for a peak to
    /// continue a branch.
    pub jump_limit: f64,
    /// Dark-mode matching tolerance in GHz; defaults to two frequency steps.
    pub dark_tolerance: Option<f64>,
    /// Fraction of non-empty columns that must share a peak for it to be
    /// called the dark mode.
    pub dark_min_fraction: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { threshold_db: 20.0, jump_limit: 0.5, dark_tolerance: None, dark_min_fraction: 0.6 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub data: BranchData,
    /// Columns without any peak above threshold.
    pub skipped_columns: usize,
    /// Peaks that could not be attached to any branch.
    pub unassigned_peaks: usize,
    /// Dark-mode frequency, when one was identified.
    pub dark_freq: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    freq: f64,
    height: f64,
}

fn column_peaks(freqs: &[f64], values: &[f64], threshold: f64) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (ym, y0, yp) = (values[i - 1], values[i], values[i + 1]);
        if y0 > ym && y0 >= yp && y0 > threshold {
            let denom = ym - 2.0 * y0 + yp;
            let delta = if denom < 0.0 { (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let step = if delta >= 0.0 { freqs[i + 1] - freqs[i] } else { freqs[i] - freqs[i - 1] };
            let height = y0 - 0.25 * (ym - yp) * delta;
            peaks.push(Peak { freq: freqs[i] + delta * step, height });
        }
    }
    peaks
}

/// Finds the frequency shared by the most columns, if it covers enough of them.
fn find_dark(columns: &[Vec<Peak>], tol: f64, min_fraction: f64) -> Option<f64> {
    let non_empty = columns.iter().filter(|c| !c.is_empty()).count();
    if non_empty == 0 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for cand in columns.iter().flatten() {
        let count = columns
            .iter()
            .filter(|c| c.iter().any(|p| (p.freq - cand.freq).abs() <= tol))
            .count();
        let better = match best {
            None => true,
            Some((n, f)) => count > n || (count == n && cand.freq < f),
        };
        if better {
            best = Some((count, cand.freq));
        }
    }
    let (count, seed) = best?;
    if (count as f64) < min_fraction * non_empty as f64 {
        return None;
    }
    let matched: Vec<f64> = columns
        .iter()
        .flatten()
        .filter(|p| (p.freq - seed).abs() <= tol)
        .map(|p| p.freq)
        .collect();
    median(&matched)
}

/// Extracts labeled branch points from a spectrum.
pub fn extract_branches(spec: &Spectrum2D, options: &ExtractOptions) -> Result<Extraction> {
    spec.validate()?;
    if spec.freq_values.len() < 3 {
        return Err(Error::Precondition("need at least 3 frequency samples per column".into()));
    }
    let floor = median(spec.magnitude_db.as_slice().unwrap_or(&spec.magnitude_db.iter().copied().collect::<Vec<_>>()))
        .unwrap_or(0.0);
    let threshold = floor + options.threshold_db;

    let columns: Vec<Vec<Peak>> = spec
        .magnitude_db
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| column_peaks(&spec.freq_values, &row.to_vec(), threshold))
        .collect();
    let skipped_columns = columns.iter().filter(|c| c.is_empty()).count();

    let tol = options.dark_tolerance.unwrap_or(2.0 * spec.freq_step());
    let dark_freq = find_dark(&columns, tol, options.dark_min_fraction);

    let n = columns.len();
    let mut labels: Vec<Vec<(BranchLabel, f64)>> = vec![Vec::new(); n];
    let mut pending: Vec<Option<f64>> = vec![None; n];
    let mut unassigned = 0;

    for (i, col) in columns.iter().enumerate() {
        let mut rest: Vec<Peak> = col.clone();
        if let Some(fd) = dark_freq {
            let nearest = rest
                .iter()
                .enumerate()
                .filter(|(_, p)| (p.freq - fd).abs() <= tol)
                .min_by(|a, b| (a.1.freq - fd).abs().total_cmp(&(b.1.freq - fd).abs()))
                .map(|(k, _)| k);
            if let Some(k) = nearest {
                labels[i].push((BranchLabel::Dark, rest.remove(k).freq));
            }
        }
        match rest.len() {
            0 => {}
            1 => pending[i] = Some(rest[0].freq),
            _ => {
                rest.sort_by(|a, b| b.height.total_cmp(&a.height));
                unassigned += rest.len() - 2;
                let (a, b) = (rest[0].freq, rest[1].freq);
                labels[i].push((BranchLabel::Lower, a.min(b)));
                labels[i].push((BranchLabel::Upper, a.max(b)));
            }
        }
    }

    let anchored = labels.iter().any(|l| l.iter().any(|(lab, _)| *lab != BranchLabel::Dark));
    if !anchored {
        // no column shows both branches: a single moving line is one branch
        for (i, p) in pending.iter_mut().enumerate() {
            if let Some(f) = p.take() {
                labels[i].push((BranchLabel::Lower, f));
            }
        }
    }

    // Grow the labeled region one column at a time so each single peak is
    // matched against an adjacent, already labeled column.
    loop {
        let mut progress = false;
        for i in 0..n {
            let Some(f) = pending[i] else { continue };
            let neighbors = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)];
            let mut best: Option<(BranchLabel, f64)> = None;
            let mut has_ref = false;
            for j in neighbors.into_iter().flatten() {
                for &(lab, fr) in &labels[j] {
                    if lab == BranchLabel::Dark {
                        continue;
                    }
                    has_ref = true;
                    let d = (fr - f).abs();
                    if d <= options.jump_limit && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((lab, d));
                    }
                }
            }
            if let Some((lab, _)) = best {
                labels[i].push((lab, f));
                pending[i] = None;
                progress = true;
            } else if has_ref {
                pending[i] = None;
                unassigned += 1;
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    unassigned += pending.iter().filter(|p| p.is_some()).count();

    let mut points = Vec::new();
    for (i, col) in labels.iter().enumerate() {
        let mut col = col.clone();
        col.sort_by_key(|(lab, _)| *lab);
        for (label, freq) in col {
            points.push(BranchPoint { field: spec.field_values[i], freq, label });
        }
    }
    Ok(Extraction { data: BranchData::new(points), skipped_columns, unassigned_peaks: unassigned, dark_freq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> GridSpec {
        GridSpec { field_start: -0.2, field_stop: 0.2, field_steps: 41, freq_start: 0.0, freq_stop: 12.0, freq_steps: 241 }
    }

    #[test]
    fn uncoupled_spectrum_has_fixed_cavity_line() {
        let model = DispersionParams::new(Model::DickeFull, 5.0, 0.0);
        let cfg = SynthConfig { dm_freq: 2.0, ..Default::default() };
        let spec = synthesize(&model, &FmrParams::sphere(0.176), &cfg, &grid()).unwrap();
        let cav = spec.freq_values.iter().position(|&f| (f - 5.0).abs() < 1e-9).unwrap();
        let dm = spec.freq_values.iter().position(|&f| (f - 2.0).abs() < 1e-9).unwrap();
        for row in spec.magnitude_db.rows() {
            // photon line at full weight, independent of field
            assert_abs_diff_eq!(row[cav], 20.0 * (1.0 + 1e-3f64 + 0.5 / (1.0 + (3.0f64 / 0.03).powi(2))).log10(), epsilon = 0.05);
            assert!(row[dm] > -7.0);
        }
    }

    #[test]
    fn spectrum_is_even_in_field() {
        let model = DispersionParams::shifted(4.46, 2.03, 2.39);
        let spec = synthesize(&model, &FmrParams::yig_slab(), &SynthConfig::default(), &grid()).unwrap();
        let n = spec.field_values.len();
        for i in 0..n {
            let a = spec.magnitude_db.row(i);
            let b = spec.magnitude_db.row(n - 1 - i);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
        assert!(!spec.metadata.masked_fields.is_empty());
    }

    #[test]
    fn photonic_fraction_limits() {
        let (l, u) = photonic_fractions(5.0, 0.1, 50.0);
        assert!(l > 0.99 && u < 0.01);
        let (l, u) = photonic_fractions(5.0, 0.1, 0.0);
        assert!(l < 0.01 && u > 0.99);
        let (l, u) = photonic_fractions(5.0, 0.1, 5.0);
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn flat_spectrum_yields_nothing() {
        let spec = Spectrum2D::new(vec![0.0, 0.1], vec![1.0, 2.0, 3.0, 4.0], Array2::from_elem((2, 4), -60.0)).unwrap();
        let ex = extract_branches(&spec, &ExtractOptions::default()).unwrap();
        assert!(ex.data.is_empty());
        assert_eq!(ex.skipped_columns, 2);
    }

    #[test]
    fn single_moving_line_is_one_branch() {
        let fields: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let freqs = linspace(0.0, 10.0, 201);
        let mut mag = Array2::zeros((fields.len(), freqs.len()));
        for (i, h) in fields.iter().enumerate() {
            let center = 2.0 + 20.0 * h;
            for (j, f) in freqs.iter().enumerate() {
                mag[[i, j]] = 20.0 * (lorentzian(*f, center, 0.05) + 1e-3f64).log10();
            }
        }
        let spec = Spectrum2D::new(fields, freqs, mag).unwrap();
        let ex = extract_branches(&spec, &ExtractOptions::default()).unwrap();
        assert_eq!(ex.data.len(), 20);
        let labels: std::collections::HashSet<_> = ex.data.points.iter().map(|p| p.label).collect();
        assert_eq!(labels.len(), 1);
    }

    #[test]
    fn parabolic_refinement_hits_symmetric_peak() {
        let freqs = linspace(0.0, 2.0, 21);
        let vals: Vec<f64> = freqs.iter().map(|f| 20.0 * lorentzian(*f, 1.03, 0.2).log10()).collect();
        let peaks = column_peaks(&freqs, &vals, -100.0);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].freq - 1.03).abs() < 0.01);
    }

    #[test]
    fn csv_round_trips() {
        let model = DispersionParams::shifted(4.46, 2.03, 2.39);
        let spec = synthesize(&model, &FmrParams::yig_slab(), &SynthConfig::default(), &grid()).unwrap();
        let mut buf = Vec::new();
        spec.write_csv(&mut buf).unwrap();
        let back = Spectrum2D::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.magnitude_db.dim(), spec.magnitude_db.dim());
        for (a, b) in back.field_values.iter().zip(&spec.field_values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let data = BranchData::new(vec![
            BranchPoint { field: 0.1, freq: 3.0, label: BranchLabel::Lower },
            BranchPoint { field: 0.1, freq: 6.0, label: BranchLabel::Upper },
            BranchPoint { field: 0.1, freq: 1.0, label: BranchLabel::Dark },
        ]);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("field_mT,freq_GHz,label"));
        let back = BranchData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert_abs_diff_eq!(back.points[0].field, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn inverted_branches_are_rejected() {
        let data = BranchData::new(vec![
            BranchPoint { field: 0.1, freq: 7.0, label: BranchLabel::Lower },
            BranchPoint { field: 0.1, freq: 6.0, label: BranchLabel::Upper },
        ]);
        assert!(data.validate().is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = DispersionParams::shifted(4.46, 2.03, 2.39);
        let bad = SynthConfig { linewidths: Linewidths { cavity: 0.0, ..Default::default() }, ..Default::default() };
        assert!(synthesize(&model, &FmrParams::yig_slab(), &bad, &grid()).is_err());
        assert!(Spectrum2D::new(vec![0.1, 0.0], vec![1.0, 2.0, 3.0], Array2::zeros((2, 3))).is_err());
    }
}
