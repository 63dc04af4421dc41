//! Least-squares estimation of polariton model parameters from branch points.
//!
//! Residuals are vertical (frequency at fixed field). Lower and upper points
//! go through the selected dispersion with the bare magnon frequency taken
//! from the FMR model; dark points are matched to a constant f_DM. The
//! optimizer is a damped Gauss–Newton (Levenberg–Marquardt) iteration with
//! multiplicative damping and projection onto the parameter bounds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionParams, Model};
use crate::fmr::{fmr_frequency, FmrParams};
use crate::numeric::median;
use crate::spectrum::{BranchData, BranchLabel, BranchPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    FBm,
    G,
    DeltaM,
    FDm,
    D,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::FBm => "f_bm",
            Param::G => "g",
            Param::DeltaM => "delta_m",
            Param::FDm => "f_dm",
            Param::D => "d",
        }
    }

    /// Dispersion parameters a model depends on.
    pub fn for_model(model: Model) -> &'static [Param] {
        match model {
            Model::Rwa | Model::DickeFull | Model::DickeSuperradiant => &[Param::FBm, Param::G],
            Model::ShiftedDicke => &[Param::FBm, Param::G, Param::DeltaM],
            Model::Hopfield => &[Param::FBm, Param::G, Param::D],
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f_bm" | "fbm" | "f-bm" => Ok(Param::FBm),
            "g" => Ok(Param::G),
            "delta_m" | "delta-m" | "dm_shift" => Ok(Param::DeltaM),
            "f_dm" | "fdm" | "f-dm" => Ok(Param::FDm),
            "d" => Ok(Param::D),
            other => Err(Error::Parse(format!("unknown fit parameter `{other}`"))),
        }
    }
}

/// Model parameters in GHz (d is dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub f_bm: f64,
    pub g: f64,
    pub delta_m: f64,
    pub f_dm: f64,
    pub d: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { f_bm: 0.0, g: 0.0, delta_m: 0.0, f_dm: 0.0, d: 1.0 }
    }
}

impl FitParams {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::FBm => self.f_bm,
            Param::G => self.g,
            Param::DeltaM => self.delta_m,
            Param::FDm => self.f_dm,
            Param::D => self.d,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::FBm => self.f_bm = v,
            Param::G => self.g = v,
            Param::DeltaM => self.delta_m = v,
            Param::FDm => self.f_dm = v,
            Param::D => self.d = v,
        }
    }

    pub fn dispersion(&self, model: Model) -> DispersionParams {
        DispersionParams {
            cavity_freq: self.f_bm,
            coupling: self.g,
            magnon_shift: self.delta_m,
            hopfield_prefactor: self.d,
            model,
            hopfield_literal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Gradient (Jᵀr, ∞-norm) tolerance.
    pub gtol: f64,
    /// Initial damping relative to the normal-matrix diagonal.
    pub initial_damping: f64,
    /// Bare magnon frequency assumed where the FMR is unsaturated. `None`
    /// drops those points instead.
    pub zero_field_magnon: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 200, xtol: 1e-9, gtol: 1e-10, initial_damping: 1e-3, zero_field_magnon: None }
    }
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: BranchData,
    pub model: Model,
    pub fmr: FmrParams,
    pub fixed: BTreeSet<Param>,
    pub initial_guess: FitParams,
    /// Static bounds overriding the defaults for individual parameters.
    pub bounds: BTreeMap<Param, (f64, f64)>,
    pub options: FitOptions,
}

impl FitProblem {
    pub fn new(data: BranchData, model: Model, fmr: FmrParams, initial_guess: FitParams) -> Self {
        Self {
            data,
            model,
            fmr,
            fixed: BTreeSet::new(),
            initial_guess,
            bounds: BTreeMap::new(),
            options: FitOptions::default(),
        }
    }

    pub fn fix(mut self, p: Param) -> Self {
        self.fixed.insert(p);
        self
    }

    /// Bounds for `p` given the current parameter values.
    ///
    /// Defaults: g ∈ (0, f_BM] (at least f_BM/2 in the superradiant phase),
    /// Δₘ ∈ [0, 2·f_BM], everything else non-negative.
    pub fn bounds_for(&self, p: Param, current: &FitParams) -> (f64, f64) {
        if let Some(b) = self.bounds.get(&p) {
            return *b;
        }
        let f_bm = current.f_bm;
        match p {
            Param::FBm => (1e-9, f64::INFINITY),
            Param::G if self.model == Model::DickeSuperradiant => (0.5 * f_bm, f_bm),
            Param::G => (1e-12 * f_bm, f_bm),
            Param::DeltaM => (0.0, 2.0 * f_bm),
            Param::FDm | Param::D => (0.0, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub params: FitParams,
    /// Gauss–Newton standard errors; zero for parameters that were not free.
    pub param_stderr: FitParams,
    pub free: Vec<Param>,
    /// GHz.
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub used_points: usize,
    pub excluded_points: usize,
    /// Objective after each accepted step, starting with the initial value.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Maps every field to its magnitude, keeping duplicates.
pub fn symmetrize(data: &BranchData) -> BranchData {
    BranchData::new(
        data.points
            .iter()
            .map(|p| BranchPoint { field: p.field.abs(), ..*p })
            .collect(),
    )
}

/// Starting point derived from the branch shapes.
///
/// f_BM is the midpoint between the top of the lower branch and the bottom
/// of the upper one, g half their smallest separation, f_DM the median dark
/// point and Δₘ zero.
pub fn initial_guess(data: &BranchData) -> Result<FitParams> {
    let mut fields: Vec<f64> = data.points.iter().map(|p| p.field).collect();
    fields.sort_by(f64::total_cmp);
    fields.dedup();
    if fields.len() < 2 {
        return Err(Error::Precondition("initial guess needs branch points at two or more fields".into()));
    }
    let lower: Vec<&BranchPoint> = data.with_label(BranchLabel::Lower).collect();
    let upper: Vec<&BranchPoint> = data.with_label(BranchLabel::Upper).collect();
    let mut min_sep = f64::INFINITY;
    for l in &lower {
        for u in upper.iter().filter(|u| u.field == l.field) {
            min_sep = min_sep.min(u.freq - l.freq);
        }
    }
    if !min_sep.is_finite() {
        return Err(Error::Precondition(
            "both branches are needed at one field for an automatic guess; supply an explicit initial guess".into(),
        ));
    }
    let lower_max = lower.iter().map(|p| p.freq).fold(f64::NEG_INFINITY, f64::max);
    let upper_min = upper.iter().map(|p| p.freq).fold(f64::INFINITY, f64::min);
    let f_bm = 0.5 * (lower_max + upper_min);
    let dark: Vec<f64> = data.with_label(BranchLabel::Dark).map(|p| p.freq).collect();
    Ok(FitParams {
        f_bm,
        g: (0.5 * min_sep).clamp(1e-6 * f_bm, f_bm),
        delta_m: 0.0,
        f_dm: median(&dark).unwrap_or(0.0),
        d: 1.0,
    })
}

struct Prepared {
    /// (label, data frequency, bare magnon frequency)
    points: Vec<(BranchLabel, f64, f64)>,
    excluded: usize,
}

fn prepare(problem: &FitProblem) -> Result<Prepared> {
    let mut points = Vec::with_capacity(problem.data.len());
    let mut excluded = 0;
    for p in &problem.data.points {
        if !(p.freq.is_finite() && p.field.is_finite()) {
            return Err(Error::InvalidInput("branch data must be finite".into()));
        }
        match p.label {
            BranchLabel::Dark => points.push((p.label, p.freq, 0.0)),
            _ => match fmr_frequency(p.field, &problem.fmr) {
                Ok(wm) => points.push((p.label, p.freq, wm)),
                Err(Error::Unsaturated { .. }) => match problem.options.zero_field_magnon {
                    Some(wm) => points.push((p.label, p.freq, wm)),
                    None => excluded += 1,
                },
                Err(e) => return Err(e),
            },
        }
    }
    // canonical order makes the result independent of input ordering
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.total_cmp(&b.2)).then(a.1.total_cmp(&b.1)));
    Ok(Prepared { points, excluded })
}

struct Objective<'a> {
    problem: &'a FitProblem,
    prepared: &'a Prepared,
    free: &'a [Param],
    base: FitParams,
}

impl Objective<'_> {
    fn params(&self, x: &DVector<f64>) -> FitParams {
        let mut p = self.base;
        for (k, &param) in self.free.iter().enumerate() {
            p.set(param, x[k]);
        }
        p
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = self.params(x);
        let disp = p.dispersion(self.problem.model);
        DVector::from_iterator(
            self.prepared.points.len(),
            self.prepared.points.iter().map(|&(label, f, wm)| match label {
                BranchLabel::Dark => f - p.f_dm,
                BranchLabel::Lower => f - disp.branches_relaxed(wm).lower,
                BranchLabel::Upper => f - disp.branches_relaxed(wm).upper,
            }),
        )
    }

    /// Central differences, one-sided at a bound.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.prepared.points.len();
        let n = self.free.len();
        let current = self.params(x);
        let mut jac = DMatrix::zeros(m, n);
        for k in 0..n {
            let (lo, hi) = self.problem.bounds_for(self.free[k], &current);
            let h = 1e-6 * x[k].abs().max(1e-3);
            let (minus, plus) = if x[k] - h < lo {
                (x[k], x[k] + h)
            } else if x[k] + h > hi {
                (x[k] - h, x[k])
            } else {
                (x[k] - h, x[k] + h)
            };
            let mut xp = x.clone();
            xp[k] = plus;
            let mut xm = x.clone();
            xm[k] = minus;
            // residual = data − model, so ∂r/∂θ = −∂model/∂θ
            let col = (self.residuals(&xp) - self.residuals(&xm)) / (plus - minus);
            jac.set_column(k, &col);
        }
        jac
    }

    fn project(&self, x: &mut DVector<f64>) {
        // f_BM first: the other bounds scale with it
        for k in 0..self.free.len() {
            let current = self.params(x);
            let (lo, hi) = self.problem.bounds_for(self.free[k], &current);
            x[k] = x[k].clamp(lo, hi);
        }
    }
}

/// Names the parameter carrying the weakest direction of JᵀJ, if it is singular.
fn rank_check(jtj: &DMatrix<f64>, free: &[Param]) -> Result<()> {
    let n = free.len();
    for k in 0..n {
        if jtj[(k, k)].is_nan() || jtj[(k, k)] <= 0.0 {
            return Err(Error::RankDeficient { parameter: free[k].name().into() });
        }
    }
    let scale = DVector::from_iterator(n, (0..n).map(|k| 1.0 / jtj[(k, k)].sqrt()));
    let corr = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(corr);
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if emin < 1e-12 {
        let v = eig.eigenvectors.column(imin);
        let worst = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).expect("non-empty");
        return Err(Error::RankDeficient { parameter: free[worst].name().into() });
    }
    Ok(())
}

/// Runs the least-squares fit.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    if problem.data.is_empty() {
        return Err(Error::Precondition("no branch data to fit".into()));
    }
    let has_dark = problem.data.count(BranchLabel::Dark) > 0;
    let mut allowed: Vec<Param> = Param::for_model(problem.model).to_vec();
    allowed.push(Param::FDm);
    if let Some(p) = problem.fixed.iter().find(|p| !allowed.contains(p)) {
        return Err(Error::InvalidInput(format!("parameter `{p}` is not part of model {}", problem.model)));
    }
    let mut free: Vec<Param> = Param::for_model(problem.model)
        .iter()
        .copied()
        .filter(|p| !problem.fixed.contains(p))
        .collect();
    if has_dark && !problem.fixed.contains(&Param::FDm) {
        free.push(Param::FDm);
    }

    let guess = problem.initial_guess;
    for &p in Param::for_model(problem.model) {
        let (lo, hi) = problem.bounds_for(p, &guess);
        let v = guess.get(p);
        if !(v.is_finite() && v >= lo && v <= hi) {
            return Err(Error::InvalidInput(format!("initial {p} = {v} outside bounds [{lo}, {hi}]")));
        }
    }

    let prepared = prepare(problem)?;
    let m = prepared.points.len();
    if m < 3 * free.len().max(1) {
        return Err(Error::Precondition(format!(
            "need at least {} usable points for {} free parameters, got {m}",
            3 * free.len().max(1),
            free.len()
        )));
    }
    let objective = Objective { problem, prepared: &prepared, free: &free, base: guess };
    let opts = problem.options;

    let mut x = DVector::from_iterator(free.len(), free.iter().map(|&p| guess.get(p)));
    let mut r = objective.residuals(&x);
    let mut cost = r.norm_squared();
    let mut trace = vec![cost];
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm: f64;

    let jac0 = objective.jacobian(&x);
    rank_check(&(jac0.transpose() * &jac0), &free)?;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let jac = objective.jacobian(&x);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        gradient_norm = grad.amax();
        if gradient_norm < opts.gtol {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        loop {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut x_new = &x + &step;
            objective.project(&mut x_new);
            let r_new = objective.residuals(&x_new);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new <= cost {
                let moved = (&x_new - &x).norm();
                x = x_new;
                r = r_new;
                cost = cost_new;
                trace.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                if moved <= opts.xtol * (x.norm() + opts.xtol) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left at working precision
                let jr = (jac.norm() * r.norm()).max(f64::MIN_POSITIVE);
                converged = gradient_norm / jr < 1e-6;
                break 'outer;
            }
        }
    }

    let jac = objective.jacobian(&x);
    let jtj = jac.transpose() * &jac;
    gradient_norm = (jac.transpose() * &r).amax();
    rank_check(&jtj, &free)?;
    let dof = (m - free.len()) as f64;
    let s2 = cost / dof;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient { parameter: free[0].name().into() })?;

    let params = objective.params(&x);
    let mut stderr = FitParams { f_bm: 0.0, g: 0.0, delta_m: 0.0, f_dm: 0.0, d: 0.0 };
    for (k, &p) in free.iter().enumerate() {
        stderr.set(p, (s2 * cov[(k, k)]).max(0.0).sqrt());
    }

    Ok(FitResult {
        model: problem.model,
        params,
        param_stderr: stderr,
        free,
        residual_rms: (cost / m as f64).sqrt(),
        iterations,
        converged,
        gradient_norm,
        used_points: m,
        excluded_points: prepared.excluded,
        objective_trace: trace,
    })
}

/// Synthetic branch points of a model at the given fields; fields where the
/// FMR is unsaturated or the lower branch is unstable contribute only what
/// exists.
pub fn model_branch_points(
    params: &FitParams,
    model: Model,
    fmr: &FmrParams,
    fields: &[f64],
    include_dark: bool,
) -> Result<BranchData> {
    let disp = params.dispersion(model);
    let mut points = Vec::new();
    for &h in fields {
        if include_dark {
            points.push(BranchPoint { field: h, freq: params.f_dm, label: BranchLabel::Dark });
        }
        let wm = match fmr_frequency(h, fmr) {
            Ok(wm) => wm,
            Err(Error::Unsaturated { .. }) => continue,
            Err(e) => return Err(e),
        };
        match disp.branches(wm) {
            Ok(pair) => {
                points.push(BranchPoint { field: h, freq: pair.lower, label: BranchLabel::Lower });
                points.push(BranchPoint { field: h, freq: pair.upper, label: BranchLabel::Upper });
            }
            Err(Error::UnstableRegime { .. }) => {
                let pair = disp.branches_relaxed(wm);
                points.push(BranchPoint { field: h, freq: pair.upper, label: BranchLabel::Upper });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(BranchData::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmr::linspace;

    fn truth() -> FitParams {
        FitParams { f_bm: 4.46, g: 2.03, delta_m: 2.39, f_dm: 1.38, d: 1.0 }
    }

    fn data() -> BranchData {
        let fields = linspace(0.01, 0.6, 60);
        model_branch_points(&truth(), Model::ShiftedDicke, &FmrParams::yig_slab(), &fields, true).unwrap()
    }

    #[test]
    fn noiseless_recovery() {
        let guess = initial_guess(&data()).unwrap();
        let res = fit(&FitProblem::new(data(), Model::ShiftedDicke, FmrParams::yig_slab(), guess)).unwrap();
        assert!(res.converged, "{res:?}");
        for p in [Param::FBm, Param::G, Param::DeltaM, Param::FDm] {
            let rel = (res.params.get(p) - truth().get(p)).abs() / truth().get(p);
            assert!(rel < 1e-6, "{p}: {rel}");
        }
        assert!(res.residual_rms < 1e-8);
    }

    #[test]
    fn guess_is_close() {
        let g = initial_guess(&data()).unwrap();
        assert!((g.f_bm - 4.46).abs() / 4.46 < 0.3, "{g:?}");
        assert!((g.g - 2.03).abs() / 2.03 < 0.3, "{g:?}");
        assert!((g.f_dm - 1.38).abs() < 1e-12);
        assert_eq!(g.delta_m, 0.0);
    }

    #[test]
    fn guess_preconditions() {
        let single = BranchData::new(vec![
            BranchPoint { field: 0.1, freq: 3.0, label: BranchLabel::Lower },
            BranchPoint { field: 0.1, freq: 6.0, label: BranchLabel::Upper },
        ]);
        assert!(matches!(initial_guess(&single), Err(Error::Precondition(_))));
        let dark_only = BranchData::new(vec![
            BranchPoint { field: 0.1, freq: 1.0, label: BranchLabel::Dark },
            BranchPoint { field: 0.2, freq: 1.0, label: BranchLabel::Dark },
        ]);
        let err = initial_guess(&dark_only).unwrap_err();
        assert!(err.to_string().contains("explicit initial guess"));
    }

    #[test]
    fn fixed_cavity_frequency() {
        let mut guess = truth();
        guess.g = 1.5;
        guess.delta_m = 1.0;
        let problem = FitProblem::new(data(), Model::ShiftedDicke, FmrParams::yig_slab(), guess).fix(Param::FBm);
        let res = fit(&problem).unwrap();
        assert_eq!(res.params.f_bm, 4.46);
        assert!(!res.free.contains(&Param::FBm));
        assert_eq!(res.param_stderr.f_bm, 0.0);
        assert!((res.params.g - 2.03).abs() < 1e-6);
    }

    #[test]
    fn fixed_parameter_must_belong_to_model() {
        let problem = FitProblem::new(data(), Model::DickeFull, FmrParams::yig_slab(), truth()).fix(Param::DeltaM);
        assert!(matches!(fit(&problem), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn dark_only_data_is_rank_deficient() {
        let dark: Vec<BranchPoint> = (0..12)
            .map(|i| BranchPoint { field: 0.1 + i as f64 * 0.01, freq: 1.0, label: BranchLabel::Dark })
            .collect();
        let problem = FitProblem::new(BranchData::new(dark), Model::DickeFull, FmrParams::yig_slab(), truth());
        match fit(&problem) {
            Err(Error::RankDeficient { parameter }) => assert!(parameter == "f_bm" || parameter == "g"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_points() {
        let few = BranchData::new(data().points.into_iter().take(5).collect());
        let problem = FitProblem::new(few, Model::ShiftedDicke, FmrParams::yig_slab(), truth());
        assert!(matches!(fit(&problem), Err(Error::Precondition(_))));
    }

    #[test]
    fn guess_outside_bounds_is_rejected() {
        let mut guess = truth();
        guess.g = 5.0;
        let problem = FitProblem::new(data(), Model::ShiftedDicke, FmrParams::yig_slab(), guess);
        assert!(matches!(fit(&problem), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unsaturated_points_are_excluded() {
        let mut d = data();
        d.points.push(BranchPoint { field: 0.0, freq: 5.3, label: BranchLabel::Upper });
        let guess = initial_guess(&d).unwrap();
        let res = fit(&FitProblem::new(d, Model::ShiftedDicke, FmrParams::yig_slab(), guess)).unwrap();
        assert_eq!(res.excluded_points, 1);
    }

    #[test]
    fn symmetrize_folds_fields() {
        let d = BranchData::new(vec![
            BranchPoint { field: -0.1, freq: 3.0, label: BranchLabel::Lower },
            BranchPoint { field: 0.1, freq: 3.0, label: BranchLabel::Lower },
        ]);
        let s = symmetrize(&d);
        assert!(s.points.iter().all(|p| p.field == 0.1));
        assert_eq!(s.len(), 2);
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn param_names() {
        for p in [Param::FBm, Param::G, Param::DeltaM, Param::FDm, Param::D] {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
    }
}
