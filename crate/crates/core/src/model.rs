//! Steady-state probe transmission of a ladder system in the weak-probe limit.
//!
//! The two-level absorption line is `T = exp(-OD / (1 + 4 (Δ/γ)²))`. With a
//! control field coupling the excited state to a Rydberg level, the linear
//! susceptibility becomes
//!
//! ```text
//! χ = iγ · (γ − 2iΔ + |Ω_c|² / (γ_ryd − 2i(Δ_c + Δ)))⁻¹
//! ```
//!
//! and the transmission is `T = exp(-OD · Im χ)`. For `Ω_c = 0` the second
//! form collapses onto the first.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Validator};
use crate::units;

/// Natural lifetime of the 29S₁/₂ state, seconds.
pub const RYDBERG_29S_LIFETIME: f64 = 21.7e-6;

/// Rb-87 D2 natural linewidth, 2π·6.07 MHz.
pub const GAMMA_D2: f64 = 6.07 * units::MHZ;

/// Spectral model parameters. All rates are angular frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EitParams {
    /// Optical depth on resonance without control field.
    pub od: f64,
    /// Probe-transition decay rate γ.
    pub gamma: f64,
    /// Control Rabi frequency Ω_c.
    pub omega_c: f64,
    /// Control detuning Δ_c.
    pub delta_c: f64,
    /// Total Rydberg decay/dephasing rate γ_ryd.
    pub gamma_ryd: f64,
    /// Probe line center on the detuning axis.
    pub offset: f64,
}

impl Default for EitParams {
    fn default() -> Self {
        Self {
            od: 1.0,
            gamma: GAMMA_D2,
            omega_c: 0.0,
            delta_c: 0.0,
            gamma_ryd: RydbergConstants::default().gamma_29s,
            offset: 0.0,
        }
    }
}

impl EitParams {
    /// Pure two-level absorption line.
    pub fn two_level(od: f64, gamma: f64, offset: f64) -> Self {
        Self {
            od,
            gamma,
            omega_c: 0.0,
            offset,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.od,
            self.gamma,
            self.omega_c,
            self.delta_c,
            self.gamma_ryd,
            self.offset,
        ]
        .iter()
        .all(|x| x.is_finite());
        Validator::default()
            .check(finite, "params", "all parameters must be finite")
            .check(self.od >= 0.0, "params.od", "must be >= 0")
            .check(self.gamma > 0.0, "params.gamma", "must be > 0")
            .check(self.gamma_ryd > 0.0, "params.gamma_ryd", "must be > 0")
            .check(self.omega_c >= 0.0, "params.omega_c", "must be >= 0")
            .finish()
    }

    /// Same parameters with a different optical depth.
    pub fn with_od(mut self, od: f64) -> Self {
        self.od = od;
        self
    }

    /// Probe detuning of the two-photon resonance, where the EIT window sits.
    pub fn eit_peak(&self) -> f64 {
        self.offset - self.delta_c
    }

    /// χ at probe detuning `delta`, without validation.
    #[inline]
    pub fn chi(&self, delta: f64) -> Complex64 {
        let d = delta - self.offset;
        let i = Complex64::i();
        let ladder = Complex64::new(self.gamma_ryd, -2.0 * (self.delta_c + d));
        let denom = Complex64::new(self.gamma, -2.0 * d) + self.omega_c * self.omega_c / ladder;
        i * self.gamma / denom
    }

    /// EIT transmission at probe detuning `delta`, without validation.
    #[inline]
    pub fn transmission(&self, delta: f64) -> f64 {
        (-self.od * self.chi(delta).im).exp()
    }

    /// Transmission together with its partial derivatives with respect to
    /// `[od, omega_c, delta_c, gamma_ryd, offset]`.
    pub fn transmission_gradient(&self, delta: f64) -> (f64, [f64; 5]) {
        let d = delta - self.offset;
        let i = Complex64::i();
        let omega2 = self.omega_c * self.omega_c;
        let ladder = Complex64::new(self.gamma_ryd, -2.0 * (self.delta_c + d));
        let ladder2 = ladder * ladder;
        let denom = Complex64::new(self.gamma, -2.0 * d) + omega2 / ladder;
        let chi = i * self.gamma / denom;
        let t = (-self.od * chi.im).exp();

        // dχ/dD = -iγ / D²
        let dchi_ddenom = -i * self.gamma / (denom * denom);
        let ddenom_domega = 2.0 * self.omega_c / ladder;
        let ddenom_dgr = -omega2 / ladder2;
        let ddenom_ddc = 2.0 * i * omega2 / ladder2;
        // D depends on Δ = delta - offset through both terms.
        let ddenom_ddelta = -2.0 * i + 2.0 * i * omega2 / ladder2;

        let scale = -self.od * t;
        let grad = [
            -chi.im * t,
            scale * (dchi_ddenom * ddenom_domega).im,
            scale * (dchi_ddenom * ddenom_ddc).im,
            scale * (dchi_ddenom * ddenom_dgr).im,
            scale * (dchi_ddenom * -ddenom_ddelta).im,
        ];
        (t, grad)
    }
}

/// Rydberg-state constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RydbergConstants {
    /// Natural linewidth γ_29S = 2π / 21.7 µs.
    pub gamma_29s: f64,
    /// Default probe linewidth γ.
    pub gamma_d2: f64,
}

impl Default for RydbergConstants {
    fn default() -> Self {
        Self {
            gamma_29s: std::f64::consts::TAU / RYDBERG_29S_LIFETIME,
            gamma_d2: GAMMA_D2,
        }
    }
}

impl RydbergConstants {
    pub fn with_gamma(gamma_d2: f64) -> Result<Self> {
        if !(gamma_d2 > 0.0 && gamma_d2.is_finite()) {
            return Err(Error::domain("probe linewidth must be positive and finite"));
        }
        Ok(Self {
            gamma_d2,
            ..Self::default()
        })
    }
}

fn check_finite(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::domain(format!("{name} is not finite ({v})")));
        }
    }
    Ok(())
}

/// Lorentzian absorption line `exp(-od / (1 + 4 (delta/gamma)²))`.
pub fn transmission_od(delta: f64, od: f64, gamma: f64) -> Result<f64> {
    check_finite(&[("delta", delta), ("od", od), ("gamma", gamma)])?;
    if gamma <= 0.0 {
        return Err(Error::domain("gamma must be > 0"));
    }
    if od < 0.0 {
        return Err(Error::domain("od must be >= 0"));
    }
    let x = delta / gamma;
    Ok((-od / (1.0 + 4.0 * x * x)).exp())
}

/// Linear susceptibility of the ladder system at probe detuning `delta`.
pub fn susceptibility(delta: f64, p: &EitParams) -> Result<Complex64> {
    check_finite(&[("delta", delta)])?;
    p.validate().map_err(|e| Error::domain(e.to_string()))?;
    Ok(p.chi(delta))
}

/// Probe transmission `exp(-od · Im χ)`.
pub fn transmission_eit(delta: f64, p: &EitParams) -> Result<f64> {
    let chi = susceptibility(delta, p)?;
    Ok((-p.od * chi.im).exp())
}

/// Excess Rydberg dephasing γ_ryd − γ_29S. Negative values mean the input
/// was below the natural linewidth.
pub fn dephasing_excess(gamma_ryd: f64, c: &RydbergConstants) -> f64 {
    gamma_ryd - c.gamma_29s
}
