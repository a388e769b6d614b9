//! Lineshape fits: two-level absorption and ladder EIT.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{covariance, minimize, LmOptions, Residuals};
use crate::error::{Error, Result};
use crate::model::{dephasing_excess, EitParams, RydbergConstants};
use crate::units::MHZ;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Probe detuning, rad/s.
    pub detuning: f64,
    pub transmission: f64,
    /// Measurement standard deviation, if known.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
}

impl Spectrum {
    pub fn new(points: Vec<SpectrumPoint>) -> Self {
        Self { points }
    }

    /// Unweighted spectrum from parallel slices.
    pub fn from_pairs(detunings: &[f64], transmission: &[f64]) -> Self {
        Self::new(
            detunings
                .iter()
                .zip(transmission)
                .map(|(&detuning, &transmission)| SpectrumPoint {
                    detuning,
                    transmission,
                    sigma: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the point count against `n_free` parameters, distinct finite
    /// detunings and usable weights.
    pub fn validate(&self, n_free: usize) -> Result<()> {
        if self.points.len() < n_free + 1 {
            return Err(Error::domain(format!(
                "spectrum has {} points, need at least {}",
                self.points.len(),
                n_free + 1
            )));
        }
        if self
            .points
            .iter()
            .any(|p| !p.detuning.is_finite() || !p.transmission.is_finite())
        {
            return Err(Error::domain("spectrum contains non-finite values"));
        }
        if self.points.iter().any(|p| matches!(p.sigma, Some(s) if !(s > 0.0 && s.is_finite()))) {
            return Err(Error::domain("sigma must be positive and finite"));
        }
        let mut d: Vec<f64> = self.points.iter().map(|p| p.detuning).collect();
        d.sort_by(f64::total_cmp);
        if d.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("detunings must be distinct"));
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.points[i].sigma.map_or(1.0, |s| 1.0 / s)
    }

    fn argmin(&self) -> usize {
        (0..self.points.len())
            .min_by(|&a, &b| self.points[a].transmission.total_cmp(&self.points[b].transmission))
            .expect("non-empty spectrum")
    }
}

/// Settings shared by both lineshape fits.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Probe linewidth γ used when frozen and as starting value otherwise.
    pub gamma: f64,
    /// Float γ in the absorption fit.
    pub fit_gamma: bool,
    pub constants: RydbergConstants,
    pub lm: LmOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        let constants = RydbergConstants::default();
        Self {
            gamma: constants.gamma_d2,
            fit_gamma: false,
            constants,
            lm: LmOptions::default(),
        }
    }
}

/// Standard errors, rad/s for frequencies. `None` for frozen parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamErrors {
    pub od: Option<f64>,
    pub gamma: Option<f64>,
    pub omega_c: Option<f64>,
    pub delta_c: Option<f64>,
    pub gamma_ryd: Option<f64>,
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Od,
    Eit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub params: EitParams,
    pub stderr: Option<ParamErrors>,
    /// Sum of squared (weighted) residuals.
    pub rss: f64,
    pub n_points: usize,
    pub n_free: usize,
    pub converged: bool,
    pub n_iter: usize,
    /// Optical depth vanished or the information matrix was singular.
    pub degenerate: bool,
    /// EIT fit replaced by an absorption fit because no window was found.
    pub fell_back: bool,
    /// γ_ryd − γ_29S, EIT fits only.
    pub dephasing_excess: Option<f64>,
    pub warnings: Vec<String>,
}

// Internally the optimizer works on frequencies in units of 2π·MHz.

struct OdProblem<'a> {
    spec: &'a Spectrum,
    gamma: f64,
    fit_gamma: bool,
}

impl OdProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        let gamma = if self.fit_gamma { p[2] } else { self.gamma };
        (p[0], p[1], gamma)
    }
}

impl Residuals for OdProblem<'_> {
    fn n_params(&self) -> usize {
        if self.fit_gamma {
            3
        } else {
            2
        }
    }
    fn n_residuals(&self) -> usize {
        self.spec.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (od, offset, gamma) = self.unpack(p);
        for (i, pt) in self.spec.points.iter().enumerate() {
            let x = (pt.detuning / MHZ - offset) / gamma;
            let model = (-od / (1.0 + 4.0 * x * x)).exp();
            out[i] = (pt.transmission - model) * self.spec.weight(i);
        }
    }
    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(0.0);
        if self.fit_gamma {
            p[2] = p[2].max(1e-3);
        }
    }
}

struct EitProblem<'a> {
    spec: &'a Spectrum,
    gamma: f64,
}

impl EitProblem<'_> {
    fn params(&self, p: &[f64]) -> EitParams {
        EitParams {
            od: p[0],
            gamma: self.gamma * MHZ,
            omega_c: p[1] * MHZ,
            delta_c: p[2] * MHZ,
            gamma_ryd: p[3] * MHZ,
            offset: p[4] * MHZ,
        }
    }
}

impl Residuals for EitProblem<'_> {
    fn n_params(&self) -> usize {
        5
    }
    fn n_residuals(&self) -> usize {
        self.spec.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let params = self.params(p);
        for (i, pt) in self.spec.points.iter().enumerate() {
            out[i] = (pt.transmission - params.transmission(pt.detuning)) * self.spec.weight(i);
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let params = self.params(p);
        for (i, pt) in self.spec.points.iter().enumerate() {
            let (_, g) = params.transmission_gradient(pt.detuning);
            let w = self.spec.weight(i);
            jac[(i, 0)] = -g[0] * w;
            for j in 1..5 {
                jac[(i, j)] = -g[j] * MHZ * w;
            }
        }
        true
    }
    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(0.0);
        p[1] = p[1].abs();
        p[3] = p[3].max(1e-6);
    }
}

fn stderr_vector(jtj: &DMatrix<f64>, rss: f64, n: usize) -> Option<Vec<f64>> {
    covariance(jtj, rss, n).map(|c| (0..c.nrows()).map(|j| c[(j, j)].max(0.0).sqrt()).collect())
}

/// Initial values for the absorption fit, in internal units.
#[derive(Debug, Clone, Copy)]
pub struct OdInit {
    pub od: f64,
    /// rad/s
    pub offset: f64,
    /// rad/s
    pub gamma: f64,
}

/// Fits `T = exp(-od / (1 + 4((Δ − offset)/γ)²))`.
pub fn fit_od(spec: &Spectrum, init: Option<OdInit>, cfg: &FitConfig) -> Result<FitResult> {
    let n_free = if cfg.fit_gamma { 3 } else { 2 };
    spec.validate(n_free)?;
    let init = init.unwrap_or_else(|| {
        let i = spec.argmin();
        let t_min = spec.points[i].transmission.clamp(1e-4, 1.0);
        OdInit {
            od: -t_min.ln(),
            offset: spec.points[i].detuning,
            gamma: cfg.gamma,
        }
    });
    let problem = OdProblem {
        spec,
        gamma: cfg.gamma / MHZ,
        fit_gamma: cfg.fit_gamma,
    };
    let mut p0 = vec![init.od, init.offset / MHZ];
    if cfg.fit_gamma {
        p0.push(init.gamma / MHZ);
    }
    let out = minimize(&problem, &p0, &cfg.lm);
    let (od, offset, gamma) = problem.unpack(&out.params);
    let mut warnings = Vec::new();
    if !out.converged {
        warnings.push(format!("absorption fit stopped: {:?}", out.termination));
    }
    let se = stderr_vector(&out.jtj, out.rss, spec.len());
    let degenerate = od < 1e-6 || se.is_none();
    if degenerate {
        warnings.push("degenerate fit: optical depth vanished or parameters unidentifiable".into());
    }
    let stderr = se.filter(|_| out.converged).map(|s| ParamErrors {
        od: Some(s[0]),
        offset: Some(s[1] * MHZ),
        gamma: cfg.fit_gamma.then(|| s[2] * MHZ),
        ..ParamErrors::default()
    });
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(FitResult {
        kind: FitKind::Od,
        params: EitParams::two_level(od, gamma * MHZ, offset * MHZ),
        stderr,
        rss: out.rss,
        n_points: spec.len(),
        n_free,
        converged: out.converged,
        n_iter: out.n_iter,
        degenerate,
        fell_back: false,
        dephasing_excess: None,
        warnings,
    })
}

/// Detects a transparency window: some point within 2γ of the fitted line
/// center whose transmission exceeds the absorption-only fit by more than
/// three standard deviations.
pub fn has_eit_window(spec: &Spectrum, od_fit: &FitResult) -> bool {
    let p = &od_fit.params;
    let near = |d: f64| (d - p.offset).abs() <= 2.0 * p.gamma;
    let outside: Vec<f64> = spec
        .points
        .iter()
        .filter(|pt| !near(pt.detuning))
        .map(|pt| pt.transmission - p.transmission(pt.detuning))
        .collect();
    let rms_outside = if outside.len() > 2 {
        (outside.iter().map(|r| r * r).sum::<f64>() / (outside.len() - 2) as f64).sqrt()
    } else {
        0.0
    };
    spec.points.iter().filter(|pt| near(pt.detuning)).any(|pt| {
        let sigma = pt.sigma.unwrap_or(rms_outside);
        let excess = pt.transmission - p.transmission(pt.detuning);
        excess > (3.0 * sigma).max(1e-9)
    })
}

/// Initial values for the EIT fit (rad/s for frequencies).
#[derive(Debug, Clone, Copy)]
pub struct EitInit {
    pub params: EitParams,
}

/// Fits the ladder-EIT lineshape with γ frozen at `cfg.gamma`.
///
/// Falls back to [`fit_od`] (and says so) when the spectrum shows no
/// transparency window.
pub fn fit_eit(spec: &Spectrum, init: Option<EitInit>, cfg: &FitConfig) -> Result<FitResult> {
    spec.validate(5)?;
    let gamma = cfg.gamma / MHZ;
    let problem = EitProblem { spec, gamma };

    let starts: Vec<Vec<f64>> = match init {
        Some(EitInit { params: p }) => vec![vec![
            p.od,
            p.omega_c / MHZ,
            p.delta_c / MHZ,
            p.gamma_ryd / MHZ,
            p.offset / MHZ,
        ]],
        None => {
            let od_cfg = FitConfig {
                fit_gamma: false,
                ..*cfg
            };
            let od_fit = fit_od(spec, None, &od_cfg)?;
            if !has_eit_window(spec, &od_fit) {
                let mut out = od_fit;
                out.fell_back = true;
                out.warnings.push("no EIT window detected; reporting absorption fit".into());
                log::warn!("no EIT window detected; reporting absorption fit");
                return Ok(out);
            }
            auto_starts(spec, &od_fit, gamma)
        }
    };

    let mut best: Option<super::lm::LmOutcome> = None;
    for p0 in &starts {
        let out = minimize(&problem, p0, &cfg.lm);
        let better = match &best {
            None => true,
            Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.rss < b.rss),
        };
        if better {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");
    let params = problem.params(&out.params);
    let mut warnings = Vec::new();
    if !out.converged {
        warnings.push(format!("EIT fit stopped: {:?}", out.termination));
    }
    let se = stderr_vector(&out.jtj, out.rss, spec.len());
    if se.is_none() {
        warnings.push("information matrix singular; uncertainties omitted".into());
    }
    let degenerate = params.od < 1e-6 || se.is_none();
    let stderr = se.filter(|_| out.converged).map(|s| ParamErrors {
        od: Some(s[0]),
        gamma: None,
        omega_c: Some(s[1] * MHZ),
        delta_c: Some(s[2] * MHZ),
        gamma_ryd: Some(s[3] * MHZ),
        offset: Some(s[4] * MHZ),
    });
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(FitResult {
        kind: FitKind::Eit,
        dephasing_excess: Some(dephasing_excess(params.gamma_ryd, &cfg.constants)),
        params,
        stderr,
        rss: out.rss,
        n_points: spec.len(),
        n_free: 5,
        converged: out.converged,
        n_iter: out.n_iter,
        degenerate,
        fell_back: false,
        warnings,
    })
}

/// Multi-start initial values derived from the absorption fit and the
/// height of the transparency peak.
fn auto_starts(spec: &Spectrum, od_fit: &FitResult, gamma: f64) -> Vec<Vec<f64>> {
    let offset = od_fit.params.offset / MHZ;
    let peak = spec
        .points
        .iter()
        .filter(|pt| (pt.detuning / MHZ - offset).abs() <= 2.0 * gamma)
        .max_by(|a, b| {
            let ea = a.transmission - od_fit.params.transmission(a.detuning);
            let eb = b.transmission - od_fit.params.transmission(b.detuning);
            ea.total_cmp(&eb)
        })
        .copied()
        .expect("window detection guarantees a point near the line center");
    let delta_c = offset - peak.detuning / MHZ;
    // Absorption depth of the bare line at the peak position.
    let x = (peak.detuning / MHZ - offset) / gamma;
    let lorentz = 1.0 / (1.0 + 4.0 * x * x);
    let od = od_fit.params.od.max(0.1) * 1.2;
    let im_peak = (-peak.transmission.clamp(1e-6, 1.0 - 1e-6).ln() / od).clamp(1e-3, 0.99 * lorentz.max(1e-3));
    // On two-photon resonance Im χ ≈ γ / (γ + Ω²/γ_ryd).
    let ratio = gamma * (1.0 / im_peak - 1.0);
    [0.5, 1.0, 1.6, 2.5]
        .iter()
        .map(|&k| {
            let omega = k * gamma;
            let gamma_ryd = (omega * omega / ratio.max(1e-3)).clamp(0.01 * gamma, 5.0 * gamma);
            vec![od, omega, delta_c, gamma_ryd, offset]
        })
        .collect()
}
