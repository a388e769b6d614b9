//! Photon-counting detection of a probe pulse.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::SequenceConfig;
use crate::model::EitParams;
use crate::units::{PLANCK, SPEED_OF_LIGHT};

/// Mean number of probe photons per pulse before detection losses.
pub fn photons_per_pulse(s: &SequenceConfig) -> f64 {
    let photon_energy = PLANCK * SPEED_OF_LIGHT / s.probe_wavelength;
    s.probe_power * s.t_probe / photon_energy
}

/// Mean number of detected photons per pulse for a fully transparent medium.
pub fn photon_budget(s: &SequenceConfig) -> f64 {
    photons_per_pulse(s) * s.detection_efficiency
}

/// Shot-noise-limited estimate of `true_transmission`: Poisson(N·T)/N.
///
/// With noise disabled the input is returned unchanged.
pub fn detect<R: Rng + ?Sized>(true_transmission: f64, s: &SequenceConfig, rng: &mut R) -> f64 {
    if !s.noise {
        return true_transmission;
    }
    let n = photon_budget(s);
    let mean = n * true_transmission.max(0.0);
    if mean <= 0.0 {
        return 0.0;
    }
    let counts: f64 = Poisson::new(mean)
        .expect("positive finite Poisson mean")
        .sample(rng);
    counts / n
}

/// Weak-probe validity of the steady-state lineshape: Ω_p < γ/5.
pub fn weak_probe_check(p: &EitParams, s: &SequenceConfig) -> bool {
    s.probe_rabi < p.gamma / 5.0
}
