mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cmpkit_core::analysis::{bundled_tables, check_row, load_tables, write_report};
use cmpkit_core::coupling::{dsc_threshold_frequency, evaluate_coupling, filling_factor, rank_field_maps};
use cmpkit_core::demag::{demag_center, demag_tensor, demag_volume_average};
use cmpkit_core::dispersion::zero_field_gap;
use cmpkit_core::fit::{fit, initial_guess, symmetrize, FitProblem};
use cmpkit_core::fmr::{fmr_frequency, linspace};
use cmpkit_core::spectrum::{extract_branches, synthesize, ExtractOptions, Linewidths};
use cmpkit_core::{
    Axis, BranchData, DispersionParams, Error as CoreError, FieldMap, FitParams, FitResult, FmrParams, GridSpec,
    Model, Param, SampleGeometry, Spectrum2D, SynthConfig,
};
use serde::Serialize;

use config::RunConfig;

/// Cavity magnon-polariton toolkit.
///
/// Frequencies are in GHz and fields in mT on the command line.
#[derive(Parser, Debug)]
#[command(name = "cmpkit", version, arg_required_else_help = true)]
struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized data generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// γ/2π in GHz/T.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// μ₀Mₛ in tesla.
    #[arg(long, global = true)]
    ms: Option<f64>,
    /// Spin density in m⁻³.
    #[arg(long, global = true)]
    ns: Option<f64>,
    /// Magnetic moment per site in Bohr magnetons.
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Landé g-factor.
    #[arg(long = "g-l", global = true)]
    g_l: Option<f64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Demagnetizing tensor of a rectangular sample.
    Demag {
        #[command(flatten)]
        geom: GeomArgs,
        /// Evaluation point in mm (default: center).
        #[arg(long, value_parser = triple)]
        point_mm: Option<[f64; 3]>,
    },
    /// Kittel FMR frequency against applied field.
    Fmr {
        #[command(flatten)]
        geom: GeomArgs,
        /// Single applied field in mT.
        #[arg(long, conflicts_with = "field_sweep")]
        field_mt: Option<f64>,
        /// start,stop,steps in mT.
        #[arg(long, value_parser = sweep, alias = "sweep-mt")]
        field_sweep: Option<(f64, f64, usize)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Polariton branches of a dispersion model.
    Dispersion {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geom: GeomArgs,
        /// Sweep the bare magnon frequency directly.
        #[arg(long, conflicts_with_all = ["sweep", "magnon"])]
        fmr_sweep: bool,
        /// Magnon frequency range for --fmr-sweep in GHz (default 0,f_bm).
        #[arg(long, value_parser = pair)]
        fmr_range: Option<(f64, f64)>,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        /// start,stop,steps applied field in mT.
        #[arg(long, value_parser = sweep, alias = "sweep-mt")]
        sweep: Option<(f64, f64, usize)>,
        /// Single bare magnon frequency in GHz.
        #[arg(long)]
        magnon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filling factor of one field map, or a ranking of several.
    Eta {
        #[arg(required = true)]
        maps: Vec<PathBuf>,
        #[arg(long, default_value = "z")]
        bias: Axis,
    },
    /// Coupling strength and regime from the filling factor.
    Coupling {
        #[arg(long)]
        eta: f64,
        /// Bright-mode frequency in GHz.
        #[arg(long, required_unless_present = "threshold")]
        f_bm: Option<f64>,
        /// Report the frequency below which g/ω ≥ 1 instead.
        #[arg(long)]
        threshold: bool,
    },
    /// Synthetic transmission map.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        geom: GeomArgs,
        /// Dark-mode frequency in GHz.
        #[arg(long, default_value_t = 1.0)]
        f_dm: f64,
        /// start,stop,steps in mT.
        #[arg(long, value_parser = sweep, default_value = "-400,400,201")]
        fields_mt: (f64, f64, usize),
        /// start,stop,steps in GHz.
        #[arg(long, value_parser = sweep, default_value = "0,18,401")]
        freqs: (f64, f64, usize),
        /// Peak-to-noise ratio in dB; omit for a noiseless map.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Half width at half maximum of every line, GHz.
        #[arg(long, default_value_t = 0.03)]
        linewidth: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Branch points from a spectrum CSV.
    Extract {
        spectrum: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20.0)]
        threshold_db: f64,
        #[arg(long, default_value_t = 0.5)]
        jump_limit: f64,
    },
    /// Least-squares fit of a model to branch points.
    Fit {
        branches: PathBuf,
        #[arg(long, default_value = "shifted-dicke")]
        model: Model,
        #[command(flatten)]
        geom: GeomArgs,
        /// Hold a parameter fixed, e.g. f_bm=4.46.
        #[arg(long, value_parser = assignment)]
        fix: Vec<(Param, f64)>,
        /// Override an initial-guess value, e.g. g=2.
        #[arg(long, value_parser = assignment)]
        guess: Vec<(Param, f64)>,
        /// Fold negative fields onto positive ones first.
        #[arg(long)]
        symmetrize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-field gap of the shifted-Dicke model.
    Gap {
        #[arg(long, required_unless_present = "tables")]
        f_bm: Option<f64>,
        #[arg(long, required_unless_present = "tables")]
        g: Option<f64>,
        #[arg(long, required_unless_present = "tables")]
        delta_m: Option<f64>,
        /// Evaluate every row of a tables CSV ("bundled" for the built-in one).
        #[arg(long)]
        tables: Option<String>,
    },
    /// Consistency checks, regressions and plots for tabulated cavities.
    Analyze {
        /// Tables CSV (default: bundled).
        #[arg(long)]
        tables: Option<PathBuf>,
        /// Fit results (JSON) to include.
        #[arg(long)]
        fits: Vec<PathBuf>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Full table reproduction from the bundled data.
    Reproduce {
        #[arg(long, default_value = "reproduce")]
        dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct GeomArgs {
    /// Sample edges in mm (default: the YIG slab).
    #[arg(long, value_parser = triple, default_value = "0.61,6.09,3.82")]
    edges_mm: [f64; 3],
    /// Bias-field axis.
    #[arg(long, default_value = "z")]
    bias: Axis,
    /// Volume-average the demagnetizing tensor on an N³ grid instead of the center value.
    #[arg(long)]
    average: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "shifted-dicke")]
    model: Model,
    /// Bright-mode frequency in GHz.
    #[arg(long)]
    f_bm: f64,
    /// Coupling g/2π in GHz.
    #[arg(long)]
    g: f64,
    /// Magnon shift in GHz.
    #[arg(long, default_value_t = 0.0)]
    delta_m: f64,
    /// Diamagnetic prefactor.
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Use the diamagnetic formula with the cavity frequency in both slots.
    #[arg(long)]
    literal: bool,
}

impl ModelArgs {
    fn params(&self) -> DispersionParams {
        DispersionParams {
            cavity_freq: self.f_bm,
            coupling: self.g,
            magnon_shift: self.delta_m,
            hopfield_prefactor: self.d,
            model: self.model,
            hopfield_literal: self.literal,
        }
    }
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{t}`"))).collect()
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let v = numbers(s)?;
    v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn pair(s: &str) -> Result<(f64, f64), String> {
    match numbers(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn sweep(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected start,stop,steps".into());
    }
    let start = parts[0].trim().parse().map_err(|_| format!("bad start `{}`", parts[0]))?;
    let stop = parts[1].trim().parse().map_err(|_| format!("bad stop `{}`", parts[1]))?;
    let steps = parts[2].trim().parse().map_err(|_| format!("bad step count `{}`", parts[2]))?;
    Ok((start, stop, steps))
}

fn assignment(s: &str) -> Result<(Param, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let p: Param = k.parse().map_err(|e: CoreError| e.to_string())?;
    let v: f64 = v.trim().parse().map_err(|_| format!("not a number: `{v}`"))?;
    Ok((p, v))
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

impl Ctx {
    fn fmr(&self, geom: &GeomArgs) -> Result<FmrParams> {
        let g = SampleGeometry::from_edges_mm(geom.edges_mm, self.cfg.saturation_field, geom.bias)?;
        let demag = match geom.average {
            Some(n) => demag_volume_average(&g, n)?,
            None => demag_center(&g),
        };
        Ok(FmrParams::new(self.cfg.constants.gyromagnetic_ratio, self.cfg.saturation_field, geom.bias, demag)?)
    }

    fn progress(&self, msg: impl AsRef<str>) {
        if self.cfg.verbosity > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn writer(&self, out: Option<&Path>) -> Result<Box<dyn Write>> {
        Ok(match out {
            Some(p) => {
                let p = self.cfg.output_path(p);
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
                Box::new(std::fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)
            }
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn print_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Exit status of a completed command.
enum Status {
    Ok,
    Failed,
}

fn run(cli: Cli) -> Result<Status> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    for (key, value) in [
        ("gamma", cli.gamma),
        ("ms", cli.ms),
        ("ns", cli.ns),
        ("mu", cli.mu),
        ("g_l", cli.g_l),
    ] {
        if let Some(v) = value {
            cfg.set(key, &v.to_string()).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = Some(dir);
    }
    cfg.verbosity = cfg.verbosity.max(cli.verbose);
    cfg.prepare_out_dir()?;
    let ctx = Ctx { cfg, seed: cli.seed.unwrap_or(0) };

    match cli.command {
        Command::Demag { geom, point_mm } => {
            let g = SampleGeometry::from_edges_mm(geom.edges_mm, ctx.cfg.saturation_field, geom.bias)?;
            let t = match (geom.average, point_mm) {
                (Some(_), Some(_)) => bail!("--average and --point-mm are exclusive"),
                (Some(n), None) => demag_volume_average(&g, n)?,
                (None, Some(p)) => demag_tensor(&g, p.map(|v| v * 1e-3))?,
                (None, None) => demag_center(&g),
            };
            #[derive(Serialize)]
            struct Out {
                components: [[f64; 3]; 3],
                eval_point: cmpkit_core::EvalPoint,
                trace: f64,
            }
            print_json(
                std::io::stdout().lock(),
                &Out { components: t.components, eval_point: t.eval_point, trace: t.trace() },
            )?;
        }
        Command::Fmr { geom, field_mt, field_sweep, out } => {
            let fmr = ctx.fmr(&geom)?;
            let fields: Vec<f64> = match (field_mt, field_sweep) {
                (Some(h), _) => vec![h],
                (None, Some((a, b, n))) => linspace(a, b, n),
                (None, None) => linspace(0.0, 400.0, 81),
            };
            let mut w = csv::Writer::from_writer(ctx.writer(out.as_deref())?);
            w.write_record(["field_T", "fmr_GHz"])?;
            for h_mt in fields {
                let h = h_mt * 1e-3;
                let f = match fmr_frequency(h, &fmr) {
                    Ok(f) => Some(f),
                    Err(CoreError::Unsaturated { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                w.write_record([h.to_string(), opt(f)])?;
            }
            w.flush()?;
        }
        Command::Dispersion { model, geom, fmr_sweep, fmr_range, steps, sweep, magnon, out } => {
            let params = model.params();
            params.validate()?;
            // (field in tesla if any, bare magnon frequency if saturated)
            let rows: Vec<(Option<f64>, Option<f64>)> = if let Some(wm) = magnon {
                vec![(None, Some(wm))]
            } else if let Some((a, b, n)) = sweep {
                let fmr = ctx.fmr(&geom)?;
                linspace(a * 1e-3, b * 1e-3, n)
                    .into_iter()
                    .map(|h| match fmr_frequency(h, &fmr) {
                        Ok(f) => Ok((Some(h), Some(f))),
                        Err(CoreError::Unsaturated { .. }) => Ok((Some(h), None)),
                        Err(e) => Err(e),
                    })
                    .collect::<std::result::Result<_, _>>()?
            } else if fmr_sweep {
                let (a, b) = fmr_range.unwrap_or((0.0, params.cavity_freq));
                linspace(a, b, steps).into_iter().map(|f| (None, Some(f))).collect()
            } else {
                bail!("choose one of --fmr-sweep, --sweep or --magnon");
            };
            let mut w = csv::Writer::from_writer(ctx.writer(out.as_deref())?);
            w.write_record(["field_T", "fmr_GHz", "lower_GHz", "upper_GHz"])?;
            for (h, wm) in rows {
                let (lower, upper) = match wm.map(|f| params.branches(f)) {
                    None => (None, None),
                    Some(Ok(p)) => (Some(p.lower), Some(p.upper)),
                    Some(Err(CoreError::UnstableRegime { .. })) => (None, None),
                    Some(Err(e)) => return Err(e.into()),
                };
                w.write_record([opt(h), opt(wm), opt(lower), opt(upper)])?;
            }
            w.flush()?;
        }
        Command::Eta { maps, bias } => {
            let loaded = maps
                .iter()
                .map(|p| Ok((p.display().to_string(), FieldMap::load(p)?)))
                .collect::<Result<Vec<_>>>()?;
            if loaded.len() == 1 {
                let eta = filling_factor(&loaded[0].1, bias)?;
                print_json(std::io::stdout().lock(), &serde_json::json!({ "map": loaded[0].0, "eta": eta }))?;
            } else {
                let ranked = rank_field_maps(&loaded, bias)?;
                let list: Vec<_> =
                    ranked.iter().map(|(name, eta)| serde_json::json!({ "map": name, "eta": eta })).collect();
                print_json(std::io::stdout().lock(), &list)?;
            }
        }
        Command::Coupling { eta, f_bm, threshold } => {
            if threshold {
                let f = dsc_threshold_frequency(eta, &ctx.cfg.constants)?;
                print_json(std::io::stdout().lock(), &serde_json::json!({ "eta": eta, "dsc_threshold_GHz": f }))?;
            } else {
                let f = f_bm.ok_or_else(|| anyhow!("--f-bm is required"))?;
                print_json(std::io::stdout().lock(), &evaluate_coupling(eta, f, &ctx.cfg.constants)?)?;
            }
        }
        Command::Simulate { model, geom, f_dm, fields_mt, freqs, snr_db, linewidth, out } => {
            let fmr = ctx.fmr(&geom)?;
            let grid = GridSpec {
                field_start: fields_mt.0 * 1e-3,
                field_stop: fields_mt.1 * 1e-3,
                field_steps: fields_mt.2,
                freq_start: freqs.0,
                freq_stop: freqs.1,
                freq_steps: freqs.2,
            };
            let config = SynthConfig {
                dm_freq: f_dm,
                linewidths: Linewidths { cavity: linewidth, magnon: linewidth, dark: linewidth },
                snr_db,
                seed: ctx.seed,
                ..SynthConfig::default()
            };
            ctx.progress(format!("synthesizing {} x {} map", grid.field_steps, grid.freq_steps));
            let start = Instant::now();
            let spec = synthesize(&model.params(), &fmr, &config, &grid)?;
            let path = ctx.cfg.output_path(&out);
            spec.save(&path)?;
            ctx.progress(format!(
                "wrote {} in {:.2?} ({} masked, {} without lower branch)",
                path.display(),
                start.elapsed(),
                spec.metadata.masked_fields.len(),
                spec.metadata.unstable_lower_fields.len()
            ));
        }
        Command::Extract { spectrum, out, threshold_db, jump_limit } => {
            let spec = Spectrum2D::load(&spectrum)?;
            let opts = ExtractOptions { threshold_db, jump_limit, ..ExtractOptions::default() };
            let ex = extract_branches(&spec, &opts)?;
            ex.data.write_csv(ctx.writer(out.as_deref())?)?;
            ctx.progress(format!(
                "{} points, {} empty columns, {} unassigned peaks, dark mode {}",
                ex.data.len(),
                ex.skipped_columns,
                ex.unassigned_peaks,
                ex.dark_freq.map(|f| format!("{f:.4} GHz")).unwrap_or_else(|| "not found".into())
            ));
        }
        Command::Fit { branches, model, geom, fix, guess, symmetrize: sym, out } => {
            let mut data = BranchData::load(&branches)?;
            if sym {
                data = symmetrize(&data);
            }
            let mut start = match initial_guess(&data) {
                Ok(g) => g,
                Err(e) if !guess.is_empty() || !fix.is_empty() => {
                    ctx.progress(format!("automatic guess unavailable ({e}); using supplied values"));
                    FitParams::default()
                }
                Err(e) => return Err(e.into()),
            };
            for &(p, v) in guess.iter().chain(fix.iter()) {
                start.set(p, v);
            }
            let mut problem = FitProblem::new(data, model, ctx.fmr(&geom)?, start);
            problem.options = ctx.cfg.fit;
            for &(p, _) in &fix {
                problem.fixed.insert(p);
            }
            let res = fit(&problem)?;
            print_json(ctx.writer(out.as_deref())?, &res)?;
            if !res.converged {
                eprintln!("fit did not converge after {} iterations", res.iterations);
                return Ok(Status::Failed);
            }
        }
        Command::Gap { f_bm, g, delta_m, tables } => {
            if let Some(t) = tables {
                let rows = if t == "bundled" { bundled_tables() } else { load_tables(Path::new(&t))? };
                let out = rows
                    .iter()
                    .map(|r| {
                        let c = check_row(r)?;
                        Ok(serde_json::json!({
                            "label": r.label, "gap_GHz": c.gap, "table_GHz": r.f_gap, "residual_GHz": c.gap_residual
                        }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                print_json(std::io::stdout().lock(), &out)?;
            } else {
                let (f, g, d) = (f_bm.unwrap_or_default(), g.unwrap_or_default(), delta_m.unwrap_or_default());
                let gap = zero_field_gap(&DispersionParams::shifted(f, g, d))?;
                print_json(std::io::stdout().lock(), &serde_json::json!({ "gap_GHz": gap, "gap_over_w": gap / f }))?;
            }
        }
        Command::Analyze { tables, fits, out, plots } => {
            let records = match tables {
                Some(p) => load_tables(&p)?,
                None => bundled_tables(),
            };
            let fit_results = fits
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<FitResult>(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let out = ctx.cfg.output_path(&out);
            let plots = plots.map(|p| ctx.cfg.output_path(&p));
            let (report, written) = write_report(&records, &fit_results, &out, plots.as_deref())?;
            for p in written {
                ctx.progress(format!("wrote {}", p.display()));
            }
            println!(
                "{}/{} rows consistent, {}/{} gaps within tolerance",
                report.rows_consistent,
                report.rows.len(),
                report.gaps_within_tolerance,
                report.rows.len()
            );
        }
        Command::Reproduce { dir } => {
            let dir = ctx.cfg.output_path(&dir);
            let records = bundled_tables();
            let (report, written) = write_report(&records, &[], &dir.join("report.json"), Some(&dir.join("plots")))?;
            for row in &report.rows {
                println!(
                    "{:<10} g/w {:.3} ({:+.4})  g2/w {:.3} ({:+.4})  gap {:.3} ({:+.3})  {}",
                    row.label,
                    row.g_over_w,
                    row.g_over_w_residual,
                    row.g2_over_w,
                    row.g2_over_w_residual,
                    row.gap,
                    row.gap_residual,
                    row.regime
                );
            }
            let q = report.shift_ratio_regression;
            println!("shift/w vs g/w: a = {:.4}, b = {:.4}, c = {:.4}, R^2 = {:.4}", q.a, q.b, q.c, q.r_squared);
            println!(
                "{}/{} rows consistent, {}/{} gaps within tolerance ({} tight)",
                report.rows_consistent,
                report.rows.len(),
                report.gaps_within_tolerance,
                report.rows.len(),
                report.gaps_within_tight_tolerance
            );
            for p in written {
                ctx.progress(format!("wrote {}", p.display()));
            }
            if !report.all_consistent() {
                return Ok(Status::Failed);
            }
        }
    }
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(err) => {
            let kind = err.chain().find_map(|e| e.downcast_ref::<CoreError>()).map(|e| e.kind()).unwrap_or("error");
            let message = format!("{err:#}");
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
    }
}
