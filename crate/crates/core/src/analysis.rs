//! Time-resolved analysis of trace sets: smoothing over repetitions, block
//! averages, EIT−OD difference maps, fixed-detuning cuts, loss-peak shift
//! and regime detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_two_segment_decay, search_common_breakpoint, DecayFit, DecayOptions, DecayPoint, Spectrum, SpectrumPoint};
use crate::sim::{photon_budget, Slot, TraceSet};

/// Centered moving mean of a series.
///
/// Odd windows average `window` samples symmetrically. Even windows use
/// `window + 1` samples with half weight on the two outermost ones, so the
/// result stays centered. Near the ends the window shrinks symmetrically.
pub fn moving_average_series(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::domain("window must be >= 1"));
    }
    if window > x.len() {
        return Err(Error::domain(format!(
            "window {window} exceeds series length {}",
            x.len()
        )));
    }
    let n = x.len();
    let h = window / 2;
    let even = window.is_multiple_of(2);
    let out = (0..n)
        .map(|i| {
            let hh = h.min(i).min(n - 1 - i);
            let (lo, hi) = (i - hh, i + hh);
            if hh == h && even && h > 0 {
                let inner: f64 = x[lo + 1..hi].iter().sum();
                (inner + 0.5 * (x[lo] + x[hi])) / window as f64
            } else {
                x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            }
        })
        .collect();
    Ok(out)
}

/// Moving average over repetitions, per detuning and slot.
pub fn moving_average(ts: &TraceSet, window: usize) -> Result<TraceSet> {
    if window > ts.n_reps() {
        return Err(Error::domain(format!(
            "window {window} exceeds repetition count {}",
            ts.n_reps()
        )));
    }
    let mut out = ts.clone();
    for det in 0..ts.n_detunings() {
        for &slot in ts.slots() {
            let smooth = moving_average_series(&ts.series(det, slot), window)?;
            for (rep, v) in smooth.into_iter().enumerate() {
                out.set(det, rep, slot, v);
            }
        }
    }
    Ok(out)
}

/// Mean and standard error of the mean per detuning for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrum {
    pub slot: Slot,
    /// First repetition, 1-based.
    pub start_rep: usize,
    pub count: usize,
    pub detunings: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    /// Detected photons per pulse at full transmission, if known.
    pub photon_budget: Option<f64>,
}

impl BlockSpectrum {
    /// Spectrum for fitting. Standard errors are floored at the error of a
    /// single detected photon in the block so that dark points do not get
    /// infinite weight; noise-free blocks are fitted unweighted.
    pub fn to_spectrum(&self) -> Spectrum {
        let any_noise = self.sem.iter().any(|&s| s > 0.0);
        let floor = match self.photon_budget {
            Some(n) => 1.0 / (n * (self.count as f64).sqrt()),
            None => self
                .sem
                .iter()
                .copied()
                .filter(|&s| s > 0.0)
                .fold(f64::INFINITY, f64::min),
        };
        Spectrum::new(
            self.detunings
                .iter()
                .zip(&self.mean)
                .zip(&self.sem)
                .map(|((&detuning, &transmission), &sem)| SpectrumPoint {
                    detuning,
                    transmission,
                    sigma: any_noise.then(|| sem.max(floor)),
                })
                .collect(),
        )
    }
}

fn noisy_budget(ts: &TraceSet) -> Option<f64> {
    ts.meta
        .as_ref()
        .filter(|m| m.sequence.noise)
        .map(|m| photon_budget(&m.sequence))
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Averages `count` repetitions starting at 1-based `start_rep`.
pub fn block_average(ts: &TraceSet, start_rep: usize, count: usize, slot: Slot) -> Result<BlockSpectrum> {
    if start_rep == 0 || count == 0 || start_rep - 1 + count > ts.n_reps() {
        return Err(Error::domain(format!(
            "block {start_rep}..{} outside 1..={}",
            start_rep + count.saturating_sub(1),
            ts.n_reps()
        )));
    }
    if !ts.has_slot(slot) {
        return Err(Error::domain(format!("trace set has no {} slot", slot.name())));
    }
    let lo = start_rep - 1;
    let (mean, sem): (Vec<f64>, Vec<f64>) = (0..ts.n_detunings())
        .map(|det| {
            let vals: Vec<f64> = (lo..lo + count).map(|r| ts.get(det, r, slot)).collect();
            mean_sem(&vals)
        })
        .unzip();
    Ok(BlockSpectrum {
        slot,
        start_rep,
        count,
        detunings: ts.grid().to_vec(),
        mean,
        sem,
        photon_budget: noisy_budget(ts),
    })
}

/// Values over (detuning, repetition).
#[derive(Debug, Clone, PartialEq)]
pub struct RepMap {
    pub grid: Vec<f64>,
    pub n_reps: usize,
    values: Vec<f64>,
}

impl RepMap {
    pub fn get(&self, det: usize, rep: usize) -> f64 {
        self.values[det * self.n_reps + rep]
    }

    pub fn row(&self, det: usize) -> &[f64] {
        &self.values[det * self.n_reps..(det + 1) * self.n_reps]
    }
}

/// Smoothed EIT-slot minus smoothed OD-slot transmission.
pub fn diff_map(ts: &TraceSet, window: usize) -> Result<RepMap> {
    if !ts.is_two_pulse() {
        return Err(Error::domain("difference map needs a two-pulse trace set"));
    }
    let smooth = moving_average(ts, window)?;
    let mut values = Vec::with_capacity(ts.n_detunings() * ts.n_reps());
    for det in 0..ts.n_detunings() {
        for rep in 0..ts.n_reps() {
            values.push(smooth.get(det, rep, Slot::Eit) - smooth.get(det, rep, Slot::Od));
        }
    }
    Ok(RepMap {
        grid: ts.grid().to_vec(),
        n_reps: ts.n_reps(),
        values,
    })
}

/// Repetition range `start_rep..start_rep + count` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start_rep: usize,
    pub count: usize,
}

impl Block {
    pub fn new(start_rep: usize, count: usize) -> Self {
        Self { start_rep, count }
    }

    /// The last `count` repetitions of `n_reps`.
    pub fn tail(n_reps: usize, count: usize) -> Self {
        Self::new(n_reps.saturating_sub(count) + 1, count.min(n_reps))
    }
}

/// Detuning interval searched for a transmission peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub center: f64,
    pub half_width: f64,
}

impl SearchWindow {
    /// Default: ±γ around the two-photon resonance, from metadata if
    /// present, otherwise the middle half of the grid.
    pub fn default_for(ts: &TraceSet) -> Self {
        match &ts.meta {
            Some(m) => SearchWindow {
                center: m.params.eit_peak(),
                half_width: m.params.gamma,
            },
            None => {
                let g = ts.grid();
                let (lo, hi) = (g[0], g[g.len() - 1]);
                SearchWindow {
                    center: 0.5 * (lo + hi),
                    half_width: 0.25 * (hi - lo),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPosition {
    /// Refined position, rad/s.
    pub detuning: f64,
    pub grid_index: usize,
    pub height: f64,
    /// Peak height above the lower of the two flanking minima.
    pub prominence: f64,
}

/// Highest interior local maximum within the window, refined with a
/// parabola through the maximum and its two neighbors. `None` if no
/// maximum rises more than three standard errors above both flanks.
pub fn locate_peak(detunings: &[f64], mean: &[f64], sem: &[f64], window: SearchWindow) -> Option<PeakPosition> {
    let inside: Vec<usize> = (0..detunings.len())
        .filter(|&i| (detunings[i] - window.center).abs() <= window.half_width)
        .collect();
    if inside.len() < 3 {
        return None;
    }
    let (lo, hi) = (inside[0], inside[inside.len() - 1]);
    let best = (lo + 1..hi).max_by(|&a, &b| mean[a].total_cmp(&mean[b]))?;
    if !(mean[best] >= mean[best - 1] && mean[best] >= mean[best + 1]) {
        return None;
    }
    let left_min = mean[lo..best].iter().copied().fold(f64::INFINITY, f64::min);
    let right_min = mean[best + 1..=hi].iter().copied().fold(f64::INFINITY, f64::min);
    let prominence = mean[best] - left_min.max(right_min);
    if !(prominence > 3.0 * sem[best]) || prominence <= 0.0 {
        return None;
    }
    let (x0, x1, x2) = (detunings[best - 1], detunings[best], detunings[best + 1]);
    let (y0, y1, y2) = (mean[best - 1], mean[best], mean[best + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    let refined = if a < 0.0 { (-b / (2.0 * a)).clamp(x0, x2) } else { x1 };
    Some(PeakPosition {
        detuning: refined,
        grid_index: best,
        height: y1,
        prominence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakShift {
    pub early: Option<PeakPosition>,
    pub late: Option<PeakPosition>,
    /// Late loss peak minus early EIT peak, rad/s.
    pub shift: Option<f64>,
    /// Grid spacing around the peaks, rad/s.
    pub resolution: f64,
    pub warnings: Vec<String>,
}

/// Shift of the late loss peak (OD slot, or EIT slot for single-pulse data)
/// relative to the early EIT peak.
pub fn peak_shift(ts: &TraceSet, early: Block, late: Block, window: Option<SearchWindow>) -> Result<PeakShift> {
    let window = window.unwrap_or_else(|| SearchWindow::default_for(ts));
    let e = block_average(ts, early.start_rep, early.count, Slot::Eit)?;
    let late_slot = if ts.is_two_pulse() { Slot::Od } else { Slot::Eit };
    let l = block_average(ts, late.start_rep, late.count, late_slot)?;
    let early_peak = locate_peak(&e.detunings, &e.mean, &e.sem, window);
    let late_peak = locate_peak(&l.detunings, &l.mean, &l.sem, window);
    let mut warnings = Vec::new();
    if early_peak.is_none() {
        warnings.push("no early EIT peak above the noise floor".to_string());
    }
    if late_peak.is_none() {
        warnings.push("no late loss peak above the noise floor".to_string());
    }
    let g = ts.grid();
    let spacing = |p: &Option<PeakPosition>| {
        p.map(|p| {
            let i = p.grid_index;
            0.5 * (g[(i + 1).min(g.len() - 1)] - g[i.saturating_sub(1)])
        })
    };
    let resolution = spacing(&early_peak)
        .into_iter()
        .chain(spacing(&late_peak))
        .fold(0.0, f64::max);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PeakShift {
        shift: match (early_peak, late_peak) {
            (Some(a), Some(b)) => Some(b.detuning - a.detuning),
            _ => None,
        },
        early: early_peak,
        late: late_peak,
        resolution,
        warnings,
    })
}

/// Smoothed transmission of both slots at one detuning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cut {
    pub det_index: usize,
    pub detuning: f64,
    /// Repetition start times, s.
    pub times: Vec<f64>,
    pub eit: Vec<f64>,
    pub od: Option<Vec<f64>>,
}

pub fn cut(ts: &TraceSet, detuning: f64, window: usize) -> Result<Cut> {
    let det = ts.nearest_index(detuning);
    let period = ts.period().unwrap_or(1.0);
    let eit = moving_average_series(&ts.series(det, Slot::Eit), window)?;
    let od = if ts.is_two_pulse() {
        Some(moving_average_series(&ts.series(det, Slot::Od), window)?)
    } else {
        None
    };
    Ok(Cut {
        det_index: det,
        detuning: ts.grid()[det],
        times: (0..ts.n_reps()).map(|r| r as f64 * period).collect(),
        eit,
        od,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RegimeOptions {
    /// Moving-average window for the equality test.
    pub window: usize,
    /// Repetitions per averaged point in the decay fits.
    pub block: usize,
    /// Equality threshold in pooled standard errors.
    pub equality_k: f64,
    /// Consecutive repetitions that must satisfy the equality threshold.
    pub equality_run: usize,
    /// Fixed breakpoint, s. Searched when `None`.
    pub breakpoint: Option<f64>,
    pub early: Option<Block>,
    pub late: Option<Block>,
    pub decay: DecayOptions,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self {
            window: 20,
            block: 20,
            equality_k: 2.0,
            equality_run: 20,
            breakpoint: None,
            early: None,
            late: None,
            decay: DecayOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Number of repetitions before the regime change.
    pub rep: usize,
    /// Regime boundary, s.
    pub time: f64,
    /// Channel the boundary was taken from.
    pub channel: Slot,
    pub z_slope_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub cut_index: usize,
    /// Grid detuning actually used, rad/s.
    pub cut_detuning: f64,
    pub breakpoint: Option<Breakpoint>,
    pub eit: Option<DecayFit>,
    pub od: Option<DecayFit>,
    pub peak_shift: Option<PeakShift>,
    /// First repetition (1-based) of the first run in which the smoothed
    /// slots agree within the pooled noise.
    pub equality_rep: Option<usize>,
    pub warnings: Vec<String>,
}

/// Per-block points `(t, −ln T̄)` for one slot at one detuning. Blocks
/// whose mean is outside (0, 1) or holds fewer than five detected photons
/// are dropped.
fn decay_points(ts: &TraceSet, det: usize, slot: Slot, block: usize) -> Vec<DecayPoint> {
    let period = ts.period().unwrap_or(1.0);
    let counts = noisy_budget(ts).map(|n| n * block as f64);
    let series = ts.series(det, slot);
    let mut pts = Vec::new();
    for (b, chunk) in series.chunks_exact(block).enumerate() {
        let (mean, sem_emp) = mean_sem(chunk);
        if !(mean > 0.0 && mean < 1.0) || counts.is_some_and(|c| mean * c < 5.0) {
            continue;
        }
        let sem = match counts {
            Some(c) => (mean / c).sqrt(),
            None => sem_emp,
        };
        let y = -mean.ln();
        pts.push(DecayPoint {
            t: (b * block) as f64 * period + 0.5 * (block - 1) as f64 * period,
            y,
            sigma_ln: (sem > 0.0).then(|| sem / (mean * y)),
        });
    }
    pts
}

/// Replaces the shot-noise errors, first estimated from the measured block
/// means, by errors evaluated on the fitted curve, which removes the
/// correlation between weights and noise.
fn reweight(pts: &[DecayPoint], fit: &DecayFit, counts: f64) -> Option<Vec<DecayPoint>> {
    let k = fit.break_index?;
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let line = fit.segments[usize::from(i >= k)].as_ref().or(fit.single.as_ref())?;
            let y = (line.intercept + line.slope * p.t).exp();
            let t_model = (-y).exp();
            let sem = (t_model / counts).sqrt();
            Some(DecayPoint {
                sigma_ln: Some(sem / (t_model * y)),
                ..*p
            })
        })
        .collect()
}

/// Usable points for one slot with errors evaluated on a first fit.
fn slot_points(ts: &TraceSet, det: usize, slot: Slot, opts: &RegimeOptions) -> Result<Vec<DecayPoint>> {
    let pts = decay_points(ts, det, slot, opts.block);
    let needed = if opts.breakpoint.is_some() {
        opts.decay.min_points
    } else {
        2 * opts.decay.min_points
    };
    if pts.len() < needed {
        return Err(Error::domain(format!(
            "only {} usable points at the cut; no decay fit",
            pts.len()
        )));
    }
    let Some(counts) = noisy_budget(ts).map(|n| n * opts.block as f64) else {
        return Ok(pts);
    };
    let first = fit_two_segment_decay(&pts, opts.breakpoint, &opts.decay)?;
    Ok(reweight(&pts, &first, counts).unwrap_or(pts))
}

/// Regime analysis at a fixed detuning: two-segment exponential fits of
/// the optical-depth signal −ln T for both slots, the repetition where the
/// slots become indistinguishable, and the loss-peak shift.
pub fn detect_regimes(ts: &TraceSet, cut_detuning: f64, opts: &RegimeOptions) -> Result<RegimeReport> {
    if !ts.is_two_pulse() {
        return Err(Error::domain("regime detection needs a two-pulse trace set"));
    }
    if opts.block == 0 || opts.window == 0 {
        return Err(Error::domain("block and window must be >= 1"));
    }
    let mut warnings = Vec::new();
    let g = ts.grid();
    if cut_detuning < g[0] || cut_detuning > g[g.len() - 1] {
        warnings.push("cut detuning outside the grid; using the nearest grid point".to_string());
    }
    let det = ts.nearest_index(cut_detuning);
    let period = ts.period().unwrap_or(1.0);

    let mut points: Vec<(Slot, Vec<DecayPoint>)> = Vec::new();
    for slot in [Slot::Eit, Slot::Od] {
        match slot_points(ts, det, slot, opts) {
            Ok(pts) => points.push((slot, pts)),
            Err(e) => warnings.push(format!("{} slot: {e}", slot.name())),
        }
    }
    // Both slots probe the same atoms, so the regime boundary is searched
    // jointly; a slot without enough points on both sides is left out.
    let common = match opts.breakpoint {
        Some(tb) => Some(tb),
        None => {
            let all: Vec<&[DecayPoint]> = points.iter().map(|(_, p)| p.as_slice()).collect();
            match search_common_breakpoint(&all, &opts.decay)? {
                Some(tb) => Some(tb),
                None => points
                    .iter()
                    .max_by_key(|(_, p)| p.len())
                    .and_then(|(_, p)| search_common_breakpoint(&[p], &opts.decay).ok().flatten()),
            }
        }
    };
    let mut fits: Vec<(Slot, Option<DecayFit>)> = Vec::new();
    for slot in [Slot::Eit, Slot::Od] {
        let Some((_, pts)) = points.iter().find(|(s, _)| *s == slot) else {
            fits.push((slot, None));
            continue;
        };
        match fit_two_segment_decay(pts, common, &opts.decay) {
            Ok(mut fit) => {
                fit.searched = opts.breakpoint.is_none();
                warnings.extend(fit.warnings.iter().map(|w| format!("{} slot: {w}", slot.name())));
                fits.push((slot, Some(fit)));
            }
            Err(e) => {
                warnings.push(format!("{} slot: {e}", slot.name()));
                fits.push((slot, None));
            }
        }
    }

    let breakpoint = match opts.breakpoint {
        Some(tb) => Some(Breakpoint {
            rep: (tb / period).round() as usize,
            time: tb,
            channel: Slot::Eit,
            z_slope_change: None,
        }),
        None => fits
            .iter()
            .filter_map(|(slot, fit)| {
                let fit = fit.as_ref().filter(|f| f.informative)?;
                let time = fit.break_time?;
                Some(Breakpoint {
                    rep: (time / period).round() as usize,
                    time,
                    channel: *slot,
                    z_slope_change: fit.z_slope_change,
                })
            })
            .max_by(|a, b| {
                a.z_slope_change
                    .unwrap_or(0.0)
                    .total_cmp(&b.z_slope_change.unwrap_or(0.0))
            }),
    };
    if breakpoint.is_none() && opts.breakpoint.is_none() {
        warnings.push("no breakpoint found".to_string());
    }

    let equality_rep = equality_rep(ts, det, opts)?;

    let early = opts.early.unwrap_or(Block::new(1, opts.block.min(ts.n_reps())));
    let late = opts.late.unwrap_or(Block::tail(ts.n_reps(), 5 * opts.block));
    let peak = match peak_shift(ts, early, late, None) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("peak shift: {e}"));
            None
        }
    };

    let mut fits = fits.into_iter();
    let eit = fits.next().and_then(|f| f.1);
    let od = fits.next().and_then(|f| f.1);
    Ok(RegimeReport {
        cut_index: det,
        cut_detuning: g[det],
        breakpoint,
        eit,
        od,
        peak_shift: peak,
        equality_rep,
        warnings,
    })
}

/// Local standard error of the moving mean, from the spread inside the window.
fn local_sem(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let h = window / 2;
    (0..n)
        .map(|i| {
            let hh = h.min(i).min(n - 1 - i);
            let vals = &x[i - hh..=i + hh];
            mean_sem(vals).1
        })
        .collect()
}

fn equality_rep(ts: &TraceSet, det: usize, opts: &RegimeOptions) -> Result<Option<usize>> {
    let window = opts.window.min(ts.n_reps());
    let eit_raw = ts.series(det, Slot::Eit);
    let od_raw = ts.series(det, Slot::Od);
    let eit = moving_average_series(&eit_raw, window)?;
    let od = moving_average_series(&od_raw, window)?;
    let se_e = local_sem(&eit_raw, window);
    let se_o = local_sem(&od_raw, window);
    let run = opts.equality_run.max(1);
    let mut streak = 0;
    for i in 0..ts.n_reps() {
        let pooled = (se_e[i].powi(2) + se_o[i].powi(2)).sqrt();
        if (eit[i] - od[i]).abs() <= opts.equality_k * pooled {
            streak += 1;
            if streak == run {
                return Ok(Some(i + 2 - run));
            }
        } else {
            streak = 0;
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(n_det: usize, n_reps: usize, f: impl Fn(usize, usize, usize) -> f64) -> TraceSet {
        let grid: Vec<f64> = (0..n_det).map(|i| i as f64).collect();
        let mut data = Vec::new();
        for d in 0..n_det {
            for r in 0..n_reps {
                for s in 0..2 {
                    data.push(f(d, r, s));
                }
            }
        }
        TraceSet::new(grid, n_reps, 2, data).unwrap()
    }

    #[test]
    fn constant_series_unchanged() {
        let x = vec![0.7; 50];
        for w in [1, 2, 7, 20] {
            let y = moving_average_series(&x, w).unwrap();
            assert!(y.iter().all(|v| (v - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn window_one_is_identity() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(moving_average_series(&x, 1).unwrap(), x);
    }

    #[test]
    fn linear_series_unchanged() {
        let x: Vec<f64> = (0..100).map(|i| 0.3 + 0.01 * i as f64).collect();
        for w in [2, 5, 20, 21] {
            let y = moving_average_series(&x, w).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12, "window {w}");
            }
        }
    }

    #[test]
    fn oversized_window_is_error() {
        assert!(moving_average_series(&[1.0, 2.0], 3).is_err());
        assert!(moving_average_series(&[1.0, 2.0], 0).is_err());
        let ts = trace(2, 10, |_, _, _| 0.5);
        assert!(moving_average(&ts, 11).is_err());
    }

    #[test]
    fn block_mean_equals_moving_average_midpoint() {
        let ts = trace(3, 60, |d, r, s| ((d * 7 + r * 3 + s) as f64 * 0.61).sin());
        let w = 21;
        let block = block_average(&ts, 11, w, Slot::Eit).unwrap();
        let smooth = moving_average(&ts, w).unwrap();
        for d in 0..3 {
            let mid = 10 + w / 2;
            assert!((block.mean[d] - smooth.get(d, mid, Slot::Eit)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_repetition_block_passthrough() {
        let ts = trace(4, 30, |d, r, s| (d + r + s) as f64 * 0.01);
        let b = block_average(&ts, 7, 1, Slot::Od).unwrap();
        assert_eq!(b.mean, ts.spectrum(6, Slot::Od));
        assert!(b.sem.iter().all(|&s| s == 0.0));
        assert!(block_average(&ts, 25, 10, Slot::Od).is_err());
        assert!(block_average(&ts, 0, 1, Slot::Od).is_err());
    }

    #[test]
    fn identical_slots_give_zero_difference() {
        let ts = trace(5, 40, |d, r, _| ((d * r) as f64).cos());
        let m = diff_map(&ts, 20).unwrap();
        assert!((0..5).all(|d| m.row(d).iter().all(|&v| v.abs() < 1e-15)));
    }

    #[test]
    fn single_pulse_diff_map_is_error() {
        let ts = TraceSet::new(vec![0.0, 1.0], 4, 1, vec![0.5; 8]).unwrap();
        assert!(diff_map(&ts, 2).is_err());
        assert!(detect_regimes(&ts, 0.0, &RegimeOptions::default()).is_err());
    }

    #[test]
    fn parabolic_refinement_finds_vertex() {
        let x: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1.0 - 0.1 * (x - 4.3).powi(2)).collect();
        let sem = vec![0.0; x.len()];
        let p = locate_peak(&x, &y, &sem, SearchWindow { center: 5.0, half_width: 5.0 }).unwrap();
        assert!((p.detuning - 4.3).abs() < 1e-12);
    }

    #[test]
    fn monotone_spectrum_has_no_peak() {
        let x: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| x * 0.01).collect();
        let sem = vec![0.0; x.len()];
        assert!(locate_peak(&x, &y, &sem, SearchWindow { center: 10.0, half_width: 10.0 }).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn swapping_slots_negates_difference(seed in 0u64..1000, w in 1usize..30) {
            let ts = trace(4, 50, |d, r, s| (((d * 131 + r * 17 + s * 7) as u64 ^ seed) % 97) as f64 / 97.0);
            let a = diff_map(&ts, w).unwrap();
            let b = diff_map(&ts.swapped_slots().unwrap(), w).unwrap();
            for d in 0..4 {
                for r in 0..50 {
                    prop_assert!((a.get(d, r) + b.get(d, r)).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn moving_average_keeps_length_and_is_linear(
            x in proptest::collection::vec(-1.0..1.0f64, 5..80),
            k in -3.0..3.0f64,
            w in 1usize..5,
        ) {
            let y: Vec<f64> = x.iter().map(|v| v * 0.5 + 0.1).collect();
            let mx = moving_average_series(&x, w).unwrap();
            let my = moving_average_series(&y, w).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + k * b).collect();
            let mc = moving_average_series(&combo, w).unwrap();
            prop_assert_eq!(mx.len(), x.len());
            for i in 0..x.len() {
                prop_assert!((mc[i] - (mx[i] + k * my[i])).abs() < 1e-12);
            }
        }
    }
}
