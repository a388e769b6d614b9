//! Commands behind the command-line interface. Each writes its artifacts
//! under the configured output directory and returns what it computed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::presets::{Preset, LOSS_SHIFT_MHZ};
use super::report::{FitOut, PeakShiftOut, RegimeOut};
use super::traces::{read_traces, traces_to_csv, write_traces};
use super::{write_atomic, write_json};
use crate::analysis::{self, Block, SearchWindow};
use crate::conveyor::ConveyorRamp;
use crate::error::{Error, Result};
use crate::fit::{self, FitResult};
use crate::sim::{self, Execution, Mode, Slot, TraceSet};
use crate::stark;
use crate::units::{from_mhz, to_mhz};

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub no_noise: bool,
    pub no_loss: bool,
    pub break_ms: Option<f64>,
    pub window: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.sequence.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if self.no_noise {
            cfg.sequence.noise = false;
        }
        if self.no_loss {
            cfg.loss.enabled = false;
        }
        if let Some(b) = self.break_ms {
            cfg.analysis.break_ms = Some(b);
        }
        if let Some(w) = self.window {
            cfg.analysis.window = w;
        }
    }
}

/// Loads the configuration file (or the preset alone), applies the
/// overrides and validates the result.
pub fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            match o.preset {
                Some(preset) if !text.lines().any(|l| l.trim_start().starts_with("preset")) => {
                    RunConfig::from_toml_str(&format!("preset = \"{}\"\n{text}", preset.name()))?
                }
                _ => RunConfig::from_toml_str(&text)?,
            }
        }
        None => RunConfig::preset(o.preset.unwrap_or(Preset::Inside)),
    };
    o.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(name)
}

pub fn simulate_config(cfg: &RunConfig, exec: Execution) -> Result<TraceSet> {
    let seq = cfg.sequence_config()?;
    sim::simulate_with(&cfg.eit_params(), &seq, &cfg.loss_model(), exec)
}

/// Simulates and writes `traces.csv` plus `traces.json`.
pub fn cmd_simulate(cfg: &RunConfig, exec: Execution) -> Result<(PathBuf, TraceSet)> {
    let ts = simulate_config(cfg, exec).map_err(|e| e.in_stage("simulate"))?;
    let path = out_path(cfg, "traces.csv");
    write_traces(&ts, &path).map_err(|e| e.in_stage("write"))?;
    Ok((path, ts))
}

/// Reads `data` if given, otherwise simulates from the configuration.
pub fn load_traces(data: Option<&Path>, cfg: &RunConfig) -> Result<TraceSet> {
    match data {
        Some(p) => read_traces(p).map_err(|e| e.in_stage("read")),
        None => simulate_config(cfg, Execution::Parallel).map_err(|e| e.in_stage("simulate")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumFit {
    Od,
    Eit,
}

/// Block-averaged spectrum starting at `analysis.fit_start`. Absorption fits
/// use the OD slot when present.
pub fn fit_spectrum(ts: &TraceSet, kind: SpectrumFit, cfg: &RunConfig) -> Result<FitResult> {
    let slot = match kind {
        SpectrumFit::Od if ts.has_slot(Slot::Od) => Slot::Od,
        _ => Slot::Eit,
    };
    let block = analysis::block_average(ts, cfg.analysis.fit_start, cfg.analysis.block, slot)?;
    let spec = block.to_spectrum();
    let fc = cfg.fit_config();
    match kind {
        SpectrumFit::Od => fit::fit_od(&spec, None, &fc),
        SpectrumFit::Eit => fit::fit_eit(&spec, None, &fc),
    }
}

/// Fits a spectrum and writes `fit_od.json` or `fit_eit.json`. A fit that
/// does not converge is still written and then reported as an error.
pub fn cmd_fit_spectrum(data: Option<&Path>, kind: SpectrumFit, cfg: &RunConfig) -> Result<(PathBuf, FitOut)> {
    let ts = load_traces(data, cfg)?;
    let fit = fit_spectrum(&ts, kind, cfg).map_err(|e| e.in_stage("fit"))?;
    let name = match kind {
        SpectrumFit::Od => "fit_od.json",
        SpectrumFit::Eit => "fit_eit.json",
    };
    let out = FitOut::from(&fit);
    let path = out_path(cfg, name);
    write_json(&path, &out)?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "{} iterations; partial result in {}",
            fit.n_iter,
            path.display()
        ))
        .in_stage("fit"));
    }
    Ok((path, out))
}

/// Regime analysis at the configured cut; writes `name`.
pub fn cmd_regimes(data: Option<&Path>, cfg: &RunConfig, name: &str) -> Result<(PathBuf, RegimeOut)> {
    let ts = load_traces(data, cfg)?;
    let report = analysis::detect_regimes(&ts, cfg.cut_detuning(), &cfg.regime_options())
        .map_err(|e| e.in_stage("regimes"))?;
    let out = RegimeOut::from(&report);
    let path = out_path(cfg, name);
    write_json(&path, &out)?;
    Ok((path, out))
}

pub fn diff_map_csv(map: &analysis::RepMap) -> Vec<u8> {
    let mut s = String::from("detuning_MHz,repetition,eit_minus_od\n");
    for (det, &d) in map.grid.iter().enumerate() {
        let d = to_mhz(d);
        for (rep, v) in map.row(det).iter().enumerate() {
            let _ = writeln!(s, "{d},{},{v}", rep + 1);
        }
    }
    s.into_bytes()
}

/// Writes `diffmap.csv`.
pub fn cmd_diffmap(data: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    let ts = load_traces(data, cfg)?;
    let map = analysis::diff_map(&ts, cfg.analysis.window).map_err(|e| e.in_stage("diffmap"))?;
    let path = out_path(cfg, "diffmap.csv");
    write_atomic(&path, &diff_map_csv(&map))?;
    Ok(path)
}

pub fn cut_csv(c: &analysis::Cut) -> Vec<u8> {
    let mut s = String::from("repetition,time_ms,eit,od\n");
    for (i, t) in c.times.iter().enumerate() {
        let od = c.od.as_ref().map(|o| o[i].to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{od}", i + 1, t * 1e3, c.eit[i]);
    }
    s.into_bytes()
}

/// Writes `cut.csv`: smoothed transmission at the cut detuning.
pub fn cmd_cut(data: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    let ts = load_traces(data, cfg)?;
    let c = analysis::cut(&ts, cfg.cut_detuning(), cfg.analysis.window).map_err(|e| e.in_stage("cut"))?;
    let path = out_path(cfg, "cut.csv");
    write_atomic(&path, &cut_csv(&c))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarkOut {
    pub alpha_mhz_cm2_per_v2: f64,
    pub shift_mhz: f64,
    pub field_v_per_cm: f64,
}

/// Converts a shift to a field, or a field to a shift.
pub fn cmd_stark(shift_mhz: Option<f64>, field: Option<f64>, alpha: f64) -> Result<StarkOut> {
    match (shift_mhz, field) {
        (Some(s), None) => Ok(StarkOut {
            alpha_mhz_cm2_per_v2: alpha,
            shift_mhz: s,
            field_v_per_cm: stark::field_from_shift(s, alpha)?,
        }),
        (None, Some(f)) => Ok(StarkOut {
            alpha_mhz_cm2_per_v2: alpha,
            shift_mhz: stark::shift_from_field(f, alpha)?,
            field_v_per_cm: f,
        }),
        _ => Err(Error::domain("give exactly one of shift or field")),
    }
}

/// Writes `transport.csv` for the fiber-transport ramp and returns the
/// total displacement in m.
pub fn cmd_transport(dir: &Path, samples: usize) -> Result<(PathBuf, f64)> {
    let ramp = ConveyorRamp::fiber_transport();
    let mut s = String::from("time_ms,df_kHz,velocity_m_per_s,position_mm\n");
    for p in ramp.profile(samples)? {
        let _ = writeln!(s, "{},{},{},{}", p.t * 1e3, p.df * 1e-3, p.velocity, p.position * 1e3);
    }
    let path = dir.join("transport.csv");
    write_atomic(&path, s.as_bytes())?;
    Ok((path, ramp.displacement()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig2c,
    Fig2d,
    Fig3c,
    Fig4,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2c => "fig2c",
            Figure::Fig2d => "fig2d",
            Figure::Fig3c => "fig3c",
            Figure::Fig4 => "fig4",
        }
    }
}

/// One extracted quantity next to its target value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub quantity: String,
    pub value: Option<f64>,
    pub target: f64,
    pub tolerance: f64,
    pub unit: &'static str,
    /// `reported` for published values, `injected` for simulation inputs.
    pub kind: &'static str,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub figure: &'static str,
    pub seed: u64,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    fn row(&mut self, quantity: impl Into<String>, value: Option<f64>, target: f64, tolerance: f64, unit: &'static str, kind: &'static str) {
        let within = value.is_some_and(|v| (v - target).abs() <= tolerance);
        self.rows.push(SummaryRow {
            quantity: quantity.into(),
            value,
            target,
            tolerance,
            unit,
            kind,
            within,
        });
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = format!("{} (seed {})\n", self.figure, self.seed);
        let _ = writeln!(
            s,
            "{:<36} {:>12} {:>12} {:>10} {:<6} {:<9} ok",
            "quantity", "value", "target", "tolerance", "unit", "kind"
        );
        for r in &self.rows {
            let v = r.value.map_or("none".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<36} {:>12} {:>12.4} {:>10.4} {:<6} {:<9} {}",
                r.quantity,
                v,
                r.target,
                r.tolerance,
                r.unit,
                r.kind,
                if r.within { "yes" } else { "no" }
            );
        }
        s
    }
}

/// Preset configuration with the figure's pulse protocol and overrides.
fn figure_config(preset: Preset, mode: Mode, o: &Overrides, dir: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::preset(preset);
    cfg.sequence.mode = mode;
    o.apply(&mut cfg);
    cfg.output.dir = dir.join(preset.name());
    cfg.validate()?;
    Ok(cfg)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs the simulate → analyze → fit pipeline for one figure and writes its
/// data files and `summary.txt`/`summary.json` under `<out-dir>/<figure>`.
pub fn cmd_reproduce(figure: Figure, o: &Overrides) -> Result<(PathBuf, Summary)> {
    let root = o.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join(figure.name());
    let mut sum = Summary {
        figure: figure.name(),
        seed: 0,
        rows: Vec::new(),
    };
    let mode = match figure {
        Figure::Fig2c | Figure::Fig2d => Mode::SinglePulse,
        Figure::Fig3c | Figure::Fig4 => Mode::TwoPulse,
    };
    let mut runs = Vec::new();
    for preset in [Preset::Inside, Preset::Outside] {
        let mut cfg = stage("config", figure_config(preset, mode, o, &root))?;
        if figure == Figure::Fig2c {
            cfg.analysis.fit_start = 201;
        }
        sum.seed = cfg.sequence.seed;
        let (_, ts) = cmd_simulate(&cfg, Execution::Parallel)?;
        runs.push((preset, cfg, ts));
    }
    match figure {
        Figure::Fig2c => fig2c(&runs, &mut sum)?,
        Figure::Fig2d => fig2d(&runs, &mut sum)?,
        Figure::Fig3c => fig3c(&runs, &mut sum)?,
        Figure::Fig4 => fig4(&runs, &mut sum)?,
    }
    write_atomic(&root.join("summary.txt"), sum.to_table().as_bytes())?;
    write_json(&root.join("summary.json"), &sum)?;
    Ok((root, sum))
}

type Run = (Preset, RunConfig, TraceSet);

fn fig2c(runs: &[Run], sum: &mut Summary) -> Result<()> {
    let mut peaks = Vec::new();
    for (preset, cfg, ts) in runs {
        let fit = stage("fit", fit_spectrum(ts, SpectrumFit::Eit, cfg))?;
        write_json(&cfg.output.dir.join("fit_eit.json"), &FitOut::from(&fit))?;
        let name = preset.name();
        let (omega, omega_tol, deph, deph_tol, peak_t) = match preset {
            Preset::Inside => (9.5, 0.6, 2.6, 0.75, 0.40),
            Preset::Outside => (9.9, 0.8, 0.9, 0.4, 0.60),
        };
        let ok = fit.converged && !fit.fell_back;
        sum.row(format!("{name}: control Rabi frequency"), ok.then(|| to_mhz(fit.params.omega_c)), omega, omega_tol, "MHz", "reported");
        sum.row(format!("{name}: excess dephasing"), fit.dephasing_excess.filter(|_| ok).map(to_mhz), deph, deph_tol, "MHz", "reported");
        let block = analysis::block_average(ts, cfg.analysis.fit_start, cfg.analysis.block, Slot::Eit)?;
        let i = ts.nearest_index(fit.params.eit_peak());
        sum.row(format!("{name}: peak transmission"), Some(block.mean[i]), peak_t, 0.1, "", "reported");
        peaks.push(ok.then(|| fit.params.eit_peak()));
    }
    let diff = match (peaks[0], peaks[1]) {
        (Some(a), Some(b)) => Some(to_mhz(a - b)),
        _ => None,
    };
    sum.row("inside - outside EIT peak shift", diff, 2.2, 1.0, "MHz", "reported");
    let field = diff.map(|d| stark::field_from_shift(d.abs(), stark::ALPHA_29S)).transpose()?;
    sum.row("equivalent electric field", field, 2.0, 1.3, "V/cm", "reported");
    Ok(())
}

fn fig2d(runs: &[Run], sum: &mut Summary) -> Result<()> {
    for (preset, cfg, ts) in runs {
        let smooth = stage("moving average", analysis::moving_average(ts, cfg.analysis.window))?;
        write_atomic(&cfg.output.dir.join("moving_average.csv"), &traces_to_csv(&smooth)?)?;
        let n = ts.n_reps();
        let b = cfg.analysis.block;
        let (od_start, od_end) = match preset {
            Preset::Inside => (19.0, 1.0),
            Preset::Outside => (32.0, 2.0),
        };
        let fit_at = |start: usize| -> Result<FitResult> {
            let mut c = cfg.clone();
            c.analysis.fit_start = start;
            stage("fit", fit_spectrum(ts, SpectrumFit::Eit, &c))
        };
        let early = fit_at(1)?;
        let late = fit_at(n - b + 1)?;
        let name = preset.name();
        sum.row(format!("{name}: OD, first {b} repetitions"), early.converged.then_some(early.params.od), od_start, 0.25 * od_start, "", "reported");
        sum.row(format!("{name}: OD, last {b} repetitions"), late.converged.then_some(late.params.od), od_end, 0.5 * od_end, "", "reported");
        let shift = stage(
            "peak shift",
            analysis::peak_shift(ts, Block::new(1, b), Block::tail(n, cfg.analysis.late_count), None),
        )?;
        write_json(&cfg.output.dir.join("peak_shift.json"), &PeakShiftOut::from(&shift))?;
        sum.row(format!("{name}: late - early peak position"), shift.shift.map(to_mhz), LOSS_SHIFT_MHZ, 1.0, "MHz", "reported");
    }
    Ok(())
}

fn fig3c(runs: &[Run], sum: &mut Summary) -> Result<()> {
    for (preset, cfg, ts) in runs {
        let map = stage("diffmap", analysis::diff_map(ts, cfg.analysis.window))?;
        write_atomic(&cfg.output.dir.join("diffmap.csv"), &diff_map_csv(&map))?;
        let report = stage("regimes", analysis::detect_regimes(ts, cfg.cut_detuning(), &cfg.regime_options()))?;
        write_json(&cfg.output.dir.join("regimes.json"), &RegimeOut::from(&report))?;
        let name = preset.name();
        let persists = match preset {
            Preset::Inside => 300.0,
            Preset::Outside => 600.0,
        };
        sum.row(format!("{name}: slots equal from repetition"), report.equality_rep.map(|r| r as f64), persists, 100.0, "rep", "reported");
        let shift = report.peak_shift.as_ref().and_then(|p| p.shift).map(to_mhz);
        sum.row(format!("{name}: loss-peak shift"), shift, LOSS_SHIFT_MHZ, 1.0, "MHz", "reported");
    }
    Ok(())
}

fn fig4(runs: &[Run], sum: &mut Summary) -> Result<()> {
    for (preset, cfg, ts) in runs {
        let c = stage("cut", analysis::cut(ts, cfg.cut_detuning(), cfg.analysis.window))?;
        write_atomic(&cfg.output.dir.join("cut.csv"), &cut_csv(&c))?;
        let report = stage("regimes", analysis::detect_regimes(ts, cfg.cut_detuning(), &cfg.regime_options()))?;
        write_json(&cfg.output.dir.join("regimes.json"), &RegimeOut::from(&report))?;
        let name = preset.name();
        let loss = cfg.loss_model();
        let period = cfg.sequence_config()?.period();
        let bp = report.breakpoint.as_ref();
        sum.row(format!("{name}: breakpoint time"), bp.map(|b| b.time * 1e3), loss.t_break * 1e3, 0.2, "ms", "reported");
        sum.row(format!("{name}: breakpoint repetition"), bp.map(|b| b.rep as f64), loss.t_break / period, 20.0, "rep", "reported");
        let (tau1, tau2) = loss.decay_times_at(report.cut_detuning, period, true);
        // Decay times are fitted with the split fixed at the injected break.
        let mut fixed = cfg.regime_options();
        fixed.breakpoint = Some(loss.t_break);
        let at_break = stage("regimes", analysis::detect_regimes(ts, cfg.cut_detuning(), &fixed))?;
        write_json(&cfg.output.dir.join("regimes_fixed_break.json"), &RegimeOut::from(&at_break))?;
        for (slot, fit) in [(Slot::Eit, &at_break.eit), (Slot::Od, &at_break.od)] {
            for (k, tau) in [(0, tau1), (1, tau2)] {
                let got = fit.as_ref().and_then(|f| f.segments[k].as_ref()).and_then(|s| s.tau);
                sum.row(
                    format!("{name}: {} decay time, regime {}", slot.name(), k + 1),
                    got.map(|t| t * 1e3),
                    tau * 1e3,
                    0.1 * tau * 1e3,
                    "ms",
                    "injected",
                );
            }
        }
    }
    Ok(())
}

/// Default search window around a detuning given in MHz.
pub fn search_window_mhz(center_mhz: f64, half_width_mhz: f64) -> SearchWindow {
    SearchWindow {
        center: from_mhz(center_mhz),
        half_width: from_mhz(half_width_mhz),
    }
}
