//! Two-regime exponential decay fits, linear in `ln y`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    /// Time, s.
    pub t: f64,
    /// Positive signal amplitude.
    pub y: f64,
    /// Standard deviation of `ln y`, if known.
    pub sigma_ln: Option<f64>,
}

impl DecayPoint {
    pub fn new(t: f64, y: f64) -> Self {
        Self { t, y, sigma_ln: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecayOptions {
    /// Minimum number of points in a segment.
    pub min_points: usize,
    /// Slope-change significance (in standard errors) required to call a
    /// searched breakpoint informative.
    pub z_threshold: f64,
    /// Candidate breakpoints per sampling interval in the search.
    pub subdivisions: usize,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            min_points: 4,
            z_threshold: 5.0,
            subdivisions: 10,
        }
    }
}

/// Weighted straight-line fit of `ln y` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub n_points: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: Option<f64>,
    pub rss: f64,
    /// Decay rate −slope, 1/s.
    pub rate: f64,
    /// Decay time 1/rate, s. `None` when the signal does not decay.
    pub tau: Option<f64>,
    pub tau_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Index of the first point of the second segment.
    pub break_index: Option<usize>,
    /// Boundary time, s: the kink of the best continuous two-slope fit when
    /// searched, the given value otherwise.
    pub break_time: Option<f64>,
    pub searched: bool,
    pub segments: [Option<SegmentFit>; 2],
    /// Single-line fit over all points.
    pub single: Option<SegmentFit>,
    /// Slope change of the continuous two-slope fit in units of its
    /// standard error.
    pub z_slope_change: Option<f64>,
    /// False when the slope change is not significant.
    pub informative: bool,
    pub rss: f64,
    pub warnings: Vec<String>,
}

struct Prepared {
    t: Vec<f64>,
    ln_y: Vec<f64>,
    w: Vec<f64>,
}

/// Continuous two-slope ("hinge") fit of `ln y` with the kink at `tb`.
#[derive(Debug, Clone, Copy)]
struct Hinge {
    slopes: [f64; 2],
    rss: f64,
    /// Standard error of the slope change, residual-variance scaled.
    change_stderr: Option<f64>,
}

fn fit_hinge(p: &Prepared, tb: f64) -> Option<Hinge> {
    let n = p.t.len();
    if n < 4 {
        return None;
    }
    let row = |t: f64| Vector3::new(1.0, (t - tb).min(0.0), (t - tb).max(0.0));
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for i in 0..n {
        let x = row(p.t[i]);
        a += p.w[i] * x * x.transpose();
        b += p.w[i] * p.ln_y[i] * x;
    }
    let inv = a.try_inverse()?;
    let beta = inv * b;
    let rss: f64 = (0..n)
        .map(|i| p.w[i] * (p.ln_y[i] - row(p.t[i]).dot(&beta)).powi(2))
        .sum();
    let var = inv[(1, 1)] + inv[(2, 2)] - 2.0 * inv[(1, 2)];
    let change_stderr = (var > 0.0).then(|| (var * rss / (n - 3) as f64).sqrt());
    Some(Hinge {
        slopes: [beta[1], beta[2]],
        rss,
        change_stderr,
    })
}

/// Candidate kinks: `subdivisions` per sampling interval, keeping at least
/// `m` points on each side.
fn candidates(t: &[f64], m: usize, subdivisions: usize) -> Vec<f64> {
    let n = t.len();
    let sub = subdivisions.max(1);
    let mut out = Vec::new();
    for i in m - 1..n - m {
        for j in 1..=sub {
            out.push(t[i] + (t[i + 1] - t[i]) * j as f64 / sub as f64);
        }
    }
    out
}

fn spread(p: &Prepared) -> f64 {
    let sw: f64 = p.w.iter().sum();
    let m = p.w.iter().zip(&p.ln_y).map(|(w, y)| w * y).sum::<f64>() / sw;
    p.w.iter().zip(&p.ln_y).map(|(w, y)| w * (y - m).powi(2)).sum()
}

fn prepare(points: &[DecayPoint]) -> Result<Prepared> {
    if points.iter().any(|p| !(p.y > 0.0) || !p.y.is_finite() || !p.t.is_finite()) {
        return Err(Error::domain("decay fit needs finite times and y > 0"));
    }
    if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::domain("decay fit needs strictly increasing times"));
    }
    if points.iter().any(|p| matches!(p.sigma_ln, Some(s) if !(s > 0.0 && s.is_finite()))) {
        return Err(Error::domain("sigma_ln must be positive and finite"));
    }
    Ok(Prepared {
        t: points.iter().map(|p| p.t).collect(),
        ln_y: points.iter().map(|p| p.y.ln()).collect(),
        w: points.iter().map(|p| p.sigma_ln.map_or(1.0, |s| 1.0 / (s * s))).collect(),
    })
}

/// Direct weighted regression on points `lo..hi`, with the standard error
/// scaled by the residual variance.
fn fit_line(p: &Prepared, lo: usize, hi: usize) -> SegmentFit {
    let n = hi - lo;
    let idx = lo..hi;
    let sw: f64 = p.w[idx.clone()].iter().sum();
    let tm = idx.clone().map(|i| p.w[i] * p.t[i]).sum::<f64>() / sw;
    let ym = idx.clone().map(|i| p.w[i] * p.ln_y[i]).sum::<f64>() / sw;
    let ctt: f64 = idx.clone().map(|i| p.w[i] * (p.t[i] - tm).powi(2)).sum();
    let cty: f64 = idx.clone().map(|i| p.w[i] * (p.t[i] - tm) * (p.ln_y[i] - ym)).sum();
    let slope = if ctt > 0.0 { cty / ctt } else { 0.0 };
    let intercept = ym - slope * tm;
    let rss: f64 = idx
        .clone()
        .map(|i| p.w[i] * (p.ln_y[i] - intercept - slope * p.t[i]).powi(2))
        .sum();
    let slope_stderr = (n > 2 && ctt > 0.0).then(|| (rss / (n - 2) as f64 / ctt).sqrt());
    let rate = -slope;
    let tau = (rate > 0.0).then(|| 1.0 / rate);
    let tau_stderr = match (tau, slope_stderr) {
        (Some(_), Some(se)) => Some(se / (rate * rate)),
        _ => None,
    };
    SegmentFit {
        n_points: n,
        t_start: p.t[lo],
        t_end: p.t[hi - 1],
        slope,
        intercept,
        slope_stderr,
        rss,
        rate,
        tau,
        tau_stderr,
    }
}

/// Fits two independent exponentials on either side of a breakpoint.
///
/// With `breakpoint = Some(t)` points with time `< t` form the first
/// segment. Otherwise the breakpoint is the kink of the continuous
/// two-slope fit with the smallest RSS over a grid of candidates leaving at
/// least `min_points` on each side (earliest on ties). Slope-change
/// significance comes from the continuous fit in both cases.
pub fn fit_two_segment_decay(
    points: &[DecayPoint],
    breakpoint: Option<f64>,
    opts: &DecayOptions,
) -> Result<DecayFit> {
    let p = prepare(points)?;
    let n = p.t.len();
    let m = opts.min_points.max(3);
    let mut warnings = Vec::new();
    let single = (n >= 3).then(|| fit_line(&p, 0, n));

    let (tb, searched) = match breakpoint {
        Some(tb) => {
            if !tb.is_finite() {
                return Err(Error::domain("breakpoint must be finite"));
            }
            (tb, false)
        }
        None => {
            if n < 2 * m {
                return Err(Error::domain(format!(
                    "breakpoint search needs at least {} points, got {n}",
                    2 * m
                )));
            }
            let tie = 1e-10 * spread(&p).max(f64::MIN_POSITIVE);
            let mut best = (f64::NAN, f64::INFINITY);
            for tb in candidates(&p.t, m, opts.subdivisions) {
                if let Some(h) = fit_hinge(&p, tb) {
                    if h.rss < best.1 - tie {
                        best = (tb, h.rss);
                    }
                }
            }
            if best.0.is_nan() {
                return Err(Error::NonConvergence("no usable breakpoint candidate".into()));
            }
            (best.0, true)
        }
    };
    let k = p.t.partition_point(|&t| t < tb);

    let mut segments = [None, None];
    for (s, (lo, hi)) in [(0, k), (k, n)].into_iter().enumerate() {
        if hi - lo >= m {
            segments[s] = Some(fit_line(&p, lo, hi));
        } else {
            warnings.push(format!(
                "segment {} has {} points (< {m}); rate omitted",
                s + 1,
                hi - lo
            ));
        }
    }

    let z = fit_hinge(&p, tb).map(|h| {
        let change = (h.slopes[1] - h.slopes[0]).abs();
        match h.change_stderr {
            Some(se) if se > 0.0 => change / se,
            _ if change <= 1e-12 * h.slopes[0].abs().max(h.slopes[1].abs()) => 0.0,
            _ => f64::INFINITY,
        }
    });
    let informative = z.is_some_and(|z| z > opts.z_threshold);
    if searched && !informative {
        warnings.push("no significant slope change; breakpoint uninformative".into());
    }
    let rss = segments.iter().flatten().map(|s| s.rss).sum();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DecayFit {
        break_index: Some(k),
        break_time: Some(tb),
        searched,
        segments,
        single,
        z_slope_change: z,
        informative,
        rss,
        warnings,
    })
}

/// Common breakpoint for several series sharing one regime boundary: the
/// kink minimizing the summed RSS of per-series continuous two-slope fits.
/// Candidates must leave `min_points` on each side in every series.
/// Returns `None` when no candidate satisfies that for all series.
pub fn search_common_breakpoint(series: &[&[DecayPoint]], opts: &DecayOptions) -> Result<Option<f64>> {
    let m = opts.min_points.max(3);
    let prepared = series.iter().map(|s| prepare(s)).collect::<Result<Vec<_>>>()?;
    if prepared.is_empty() || prepared.iter().any(|p| p.t.len() < 2 * m) {
        return Ok(None);
    }
    let lo = prepared.iter().map(|p| p.t[m - 1]).fold(f64::NEG_INFINITY, f64::max);
    let hi = prepared.iter().map(|p| p.t[p.t.len() - m]).fold(f64::INFINITY, f64::min);
    let longest = prepared.iter().max_by_key(|p| p.t.len()).expect("non-empty");
    let tie = 1e-10 * prepared.iter().map(spread).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut best = (None, f64::INFINITY);
    for tb in candidates(&longest.t, 1, opts.subdivisions) {
        if !(tb > lo && tb <= hi) {
            continue;
        }
        let total: Option<f64> = prepared.iter().map(|p| fit_hinge(p, tb).map(|h| h.rss)).sum();
        if let Some(total) = total {
            if total < best.1 - tie {
                best = (Some(tb), total);
            }
        }
    }
    Ok(best.0)
}
