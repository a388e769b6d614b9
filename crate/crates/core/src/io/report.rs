//! JSON views of fit results and regime reports in file units: MHz for
//! frequencies, ms for times.

use serde::Serialize;

use super::config::ParamsSection;
use crate::analysis::{PeakShift, RegimeReport};
use crate::fit::{DecayFit, FitKind, FitResult, SegmentFit};
use crate::sim::Slot;
use crate::units::to_mhz;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorsOut {
    pub od: Option<f64>,
    pub gamma_mhz: Option<f64>,
    pub omega_c_mhz: Option<f64>,
    pub delta_c_mhz: Option<f64>,
    pub gamma_ryd_mhz: Option<f64>,
    pub offset_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOut {
    pub kind: FitKind,
    pub converged: bool,
    pub n_iter: usize,
    pub n_points: usize,
    pub n_free: usize,
    pub rss: f64,
    pub degenerate: bool,
    pub fell_back: bool,
    pub params: ParamsSection,
    pub eit_peak_mhz: f64,
    pub stderr: Option<ErrorsOut>,
    pub dephasing_excess_mhz: Option<f64>,
    pub warnings: Vec<String>,
}

impl From<&FitResult> for FitOut {
    fn from(f: &FitResult) -> Self {
        let m = |x: Option<f64>| x.map(to_mhz);
        Self {
            kind: f.kind,
            converged: f.converged,
            n_iter: f.n_iter,
            n_points: f.n_points,
            n_free: f.n_free,
            rss: f.rss,
            degenerate: f.degenerate,
            fell_back: f.fell_back,
            params: ParamsSection::from_params(&f.params),
            eit_peak_mhz: to_mhz(f.params.eit_peak()),
            stderr: f.stderr.map(|e| ErrorsOut {
                od: e.od,
                gamma_mhz: m(e.gamma),
                omega_c_mhz: m(e.omega_c),
                delta_c_mhz: m(e.delta_c),
                gamma_ryd_mhz: m(e.gamma_ryd),
                offset_mhz: m(e.offset),
            }),
            dephasing_excess_mhz: m(f.dephasing_excess),
            warnings: f.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentOut {
    pub n_points: usize,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    pub rate_per_ms: f64,
    pub tau_ms: Option<f64>,
    pub tau_stderr_ms: Option<f64>,
}

impl From<&SegmentFit> for SegmentOut {
    fn from(s: &SegmentFit) -> Self {
        Self {
            n_points: s.n_points,
            t_start_ms: s.t_start * 1e3,
            t_end_ms: s.t_end * 1e3,
            rate_per_ms: s.rate * 1e-3,
            tau_ms: s.tau.map(|t| t * 1e3),
            tau_stderr_ms: s.tau_stderr.map(|t| t * 1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayOut {
    pub break_time_ms: Option<f64>,
    pub searched: bool,
    pub informative: bool,
    pub z_slope_change: Option<f64>,
    pub regime1: Option<SegmentOut>,
    pub regime2: Option<SegmentOut>,
    pub single: Option<SegmentOut>,
    pub warnings: Vec<String>,
}

impl From<&DecayFit> for DecayOut {
    fn from(f: &DecayFit) -> Self {
        Self {
            break_time_ms: f.break_time.map(|t| t * 1e3),
            searched: f.searched,
            informative: f.informative,
            z_slope_change: f.z_slope_change,
            regime1: f.segments[0].as_ref().map(Into::into),
            regime2: f.segments[1].as_ref().map(Into::into),
            single: f.single.as_ref().map(Into::into),
            warnings: f.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakShiftOut {
    pub early_peak_mhz: Option<f64>,
    pub late_peak_mhz: Option<f64>,
    pub shift_mhz: Option<f64>,
    pub resolution_mhz: f64,
    pub warnings: Vec<String>,
}

impl From<&PeakShift> for PeakShiftOut {
    fn from(p: &PeakShift) -> Self {
        Self {
            early_peak_mhz: p.early.map(|e| to_mhz(e.detuning)),
            late_peak_mhz: p.late.map(|e| to_mhz(e.detuning)),
            shift_mhz: p.shift.map(to_mhz),
            resolution_mhz: to_mhz(p.resolution),
            warnings: p.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointOut {
    pub rep: usize,
    pub time_ms: f64,
    pub channel: Slot,
    pub z_slope_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeOut {
    pub cut_index: usize,
    pub cut_detuning_mhz: f64,
    /// `null` means no breakpoint was found.
    pub breakpoint: Option<BreakpointOut>,
    pub eit: Option<DecayOut>,
    pub od: Option<DecayOut>,
    pub peak_shift: Option<PeakShiftOut>,
    pub equality_rep: Option<usize>,
    pub warnings: Vec<String>,
}

impl From<&RegimeReport> for RegimeOut {
    fn from(r: &RegimeReport) -> Self {
        Self {
            cut_index: r.cut_index,
            cut_detuning_mhz: to_mhz(r.cut_detuning),
            breakpoint: r.breakpoint.as_ref().map(|b| BreakpointOut {
                rep: b.rep,
                time_ms: b.time * 1e3,
                channel: b.channel,
                z_slope_change: b.z_slope_change,
            }),
            eit: r.eit.as_ref().map(Into::into),
            od: r.od.as_ref().map(Into::into),
            peak_shift: r.peak_shift.as_ref().map(Into::into),
            equality_rep: r.equality_rep,
            warnings: r.warnings.clone(),
        }
    }
}
