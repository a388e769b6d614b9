use serde::{Deserialize, Serialize};

use crate::error::{Result, Validator};
use crate::units;

/// Pulse protocol of one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One probe pulse with the control beam on.
    SinglePulse,
    /// EIT pulse (control on) followed directly by an OD-only pulse.
    TwoPulse,
}

impl Mode {
    pub fn n_slots(self) -> usize {
        match self {
            Mode::SinglePulse => 1,
            Mode::TwoPulse => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub n_reps: usize,
    /// Probe pulse length, s.
    pub t_probe: f64,
    /// Recapture/hold time in the lattice after the probe pulses, s.
    pub t_hold: f64,
    pub mode: Mode,
    /// Probe power, W.
    pub probe_power: f64,
    /// Probe Rabi frequency Ω_p, rad/s. Only used for the weak-probe check.
    pub probe_rabi: f64,
    /// Probe wavelength, m.
    pub probe_wavelength: f64,
    pub detection_efficiency: f64,
    /// Disables shot noise; detected transmission equals the true one.
    pub noise: bool,
    pub rng_seed: u64,
    /// Probe detunings, rad/s, strictly increasing.
    pub detuning_grid: Vec<f64>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            n_reps: 1000,
            t_probe: 2e-6,
            t_hold: 8e-6,
            mode: Mode::SinglePulse,
            probe_power: 100e-12,
            probe_rabi: units::from_mhz(0.3),
            probe_wavelength: 780e-9,
            detection_efficiency: 0.1,
            noise: true,
            rng_seed: 1,
            detuning_grid: uniform_grid(-20.0, 20.0, 41),
        }
    }
}

/// `n` evenly spaced detunings from `lo_mhz` to `hi_mhz`, returned in rad/s.
pub fn uniform_grid(lo_mhz: f64, hi_mhz: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![units::from_mhz(lo_mhz)],
        _ => (0..n)
            .map(|i| units::from_mhz(lo_mhz + (hi_mhz - lo_mhz) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        let grid_ok = !self.detuning_grid.is_empty()
            && self.detuning_grid.iter().all(|d| d.is_finite())
            && self.detuning_grid.windows(2).all(|w| w[1] > w[0]);
        Validator::default()
            .check(self.n_reps >= 1, "sequence.n_reps", "must be >= 1")
            .check(
                self.t_probe > 0.0 && self.t_probe.is_finite(),
                "sequence.t_probe",
                "must be > 0",
            )
            .check(
                self.t_hold > 0.0 && self.t_hold.is_finite(),
                "sequence.t_hold",
                "must be > 0",
            )
            .check(
                self.mode == Mode::SinglePulse || self.t_hold >= self.t_probe,
                "sequence.t_hold",
                "must be >= t_probe in two-pulse mode",
            )
            .check(
                self.probe_power > 0.0 && self.probe_power.is_finite(),
                "sequence.probe_power",
                "must be > 0",
            )
            .check(
                self.probe_rabi >= 0.0 && self.probe_rabi.is_finite(),
                "sequence.probe_rabi",
                "must be >= 0",
            )
            .check(
                self.probe_wavelength > 0.0 && self.probe_wavelength.is_finite(),
                "sequence.probe_wavelength",
                "must be > 0",
            )
            .check(
                self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0,
                "sequence.detection_efficiency",
                "must be within (0, 1]",
            )
            .check(
                grid_ok,
                "sequence.detuning_grid",
                "must be non-empty, finite and strictly increasing",
            )
            .finish()
    }

    /// Duration of one repetition: the first probe pulse plus the hold time.
    /// In two-pulse mode the OD pulse occupies the start of the hold window.
    pub fn period(&self) -> f64 {
        self.t_probe + self.t_hold
    }

    /// Start time of repetition `rep` (0-based).
    pub fn rep_time(&self, rep: usize) -> f64 {
        rep as f64 * self.period()
    }
}

/// Phenomenological atom-loss model.
///
/// The optical depth seen by repetition n at probe detuning d is
/// `od0 · A(t_n) · s(d)^n`, where `A` is a two-regime exponential with time
/// constants `tau1` before `t_break` and `tau2` after, and
/// `s(d) = 1 − loss_amp · (1 + eit_loss_boost·[control on]) · L(d − loss_center)`
/// is the per-repetition survival with a unit-peak Lorentzian `L` of
/// full width `loss_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub od0: f64,
    /// Regime-1 decay time, s. `f64::INFINITY` disables the decay.
    #[serde(with = "inf_as_null")]
    pub tau1: f64,
    /// Regime-2 decay time, s.
    #[serde(with = "inf_as_null")]
    pub tau2: f64,
    /// Regime boundary, s.
    pub t_break: f64,
    /// Loss-peak position on the probe detuning axis, rad/s.
    pub loss_center: f64,
    /// Loss-peak full width, rad/s.
    pub loss_width: f64,
    /// Per-repetition loss fraction at the loss-peak center.
    pub loss_amp: f64,
    /// Relative extra loss while the control beam is on.
    pub eit_loss_boost: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl LossModel {
    /// Constant optical depth, no loss of any kind.
    pub fn disabled(od0: f64) -> Self {
        Self {
            od0,
            tau1: f64::INFINITY,
            tau2: f64::INFINITY,
            t_break: 3e-3,
            loss_center: 0.0,
            loss_width: units::from_mhz(1.0),
            loss_amp: 0.0,
            eit_loss_boost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Validator::default()
            .check(self.od0 > 0.0 && self.od0.is_finite(), "loss.od0", "must be > 0")
            .check(
                self.tau1 > 0.0 && !self.tau1.is_nan(),
                "loss.tau1",
                "must be > 0",
            )
            .check(
                self.tau2 > 0.0 && !self.tau2.is_nan(),
                "loss.tau2",
                "must be > 0",
            )
            .check(
                self.t_break >= 0.0 && self.t_break.is_finite(),
                "loss.t_break",
                "must be >= 0",
            )
            .check(self.loss_center.is_finite(), "loss.loss_center", "must be finite")
            .check(
                self.loss_width > 0.0 && self.loss_width.is_finite(),
                "loss.loss_width",
                "must be > 0",
            )
            .check(
                (0.0..1.0).contains(&self.loss_amp),
                "loss.loss_amp",
                "must be within [0, 1)",
            )
            .check(
                self.eit_loss_boost >= 0.0 && self.eit_loss_boost.is_finite(),
                "loss.eit_loss_boost",
                "must be >= 0",
            )
            .check(
                self.loss_amp * (1.0 + self.eit_loss_boost) < 1.0,
                "loss.eit_loss_boost",
                "boosted loss fraction loss_amp * (1 + boost) must stay below 1",
            )
            .finish()
    }

    /// Smooth two-regime amplitude factor A(t), A(0) = 1.
    pub fn amplitude(&self, t: f64) -> f64 {
        if t <= self.t_break {
            (-t / self.tau1).exp()
        } else {
            (-self.t_break / self.tau1 - (t - self.t_break) / self.tau2).exp()
        }
    }

    /// Unit-peak Lorentzian spectral loss profile.
    pub fn loss_profile(&self, detuning: f64) -> f64 {
        let x = (detuning - self.loss_center) / self.loss_width;
        1.0 / (1.0 + 4.0 * x * x)
    }

    /// Fraction of atoms surviving one repetition at `detuning`.
    pub fn survival(&self, detuning: f64, control_on: bool) -> f64 {
        let boost = if control_on { 1.0 + self.eit_loss_boost } else { 1.0 };
        (1.0 - self.loss_amp * boost * self.loss_profile(detuning)).max(0.0)
    }

    /// Ground-truth optical depth at repetition `rep` (0-based).
    pub fn od_at(&self, detuning: f64, rep: usize, period: f64, control_on: bool) -> f64 {
        let t = rep as f64 * period;
        self.od0 * self.amplitude(t) * self.survival(detuning, control_on).powi(rep as i32)
    }

    /// Decay rates (1/s) of the optical depth at a fixed detuning in the two
    /// regimes, including the spectrally selective loss.
    pub fn decay_rates_at(&self, detuning: f64, period: f64, control_on: bool) -> (f64, f64) {
        let spectral = -self.survival(detuning, control_on).ln() / period;
        (1.0 / self.tau1 + spectral, 1.0 / self.tau2 + spectral)
    }

    /// Decay times (s) at a fixed detuning in the two regimes.
    pub fn decay_times_at(&self, detuning: f64, period: f64, control_on: bool) -> (f64, f64) {
        let (r1, r2) = self.decay_rates_at(detuning, period, control_on);
        (1.0 / r1, 1.0 / r2)
    }
}
