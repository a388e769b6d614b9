use serde::{Deserialize, Serialize};

use crate::model::{EitParams, GAMMA_D2, RYDBERG_29S_LIFETIME};
use crate::sim::{uniform_grid, LossModel, Mode, SequenceConfig};
use crate::units::{from_mhz, MHZ};

/// The two measurement conditions: atoms inside the hollow-core fiber and
/// atoms in front of the fiber tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Inside,
    Outside,
}

/// Offset of the loss peak from the initial EIT peak.
pub const LOSS_SHIFT_MHZ: f64 = 2.5;

/// Natural Rydberg linewidth in MHz.
fn gamma_29s_mhz() -> f64 {
    1.0 / RYDBERG_29S_LIFETIME / MHZ
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Inside => "inside",
            Preset::Outside => "outside",
        }
    }

    /// Spectral parameters; `od` is the initial optical depth.
    pub fn params(self) -> EitParams {
        let (od, omega_c, dephasing, offset) = match self {
            Preset::Inside => (19.0, 9.5, 2.6, 2.2),
            Preset::Outside => (32.0, 9.9, 0.9, 0.0),
        };
        EitParams {
            od,
            gamma: GAMMA_D2,
            omega_c: from_mhz(omega_c),
            delta_c: 0.0,
            gamma_ryd: from_mhz(dephasing + gamma_29s_mhz()),
            offset: from_mhz(offset),
        }
    }

    pub fn sequence(self) -> SequenceConfig {
        SequenceConfig {
            mode: Mode::TwoPulse,
            detuning_grid: uniform_grid(-20.0, 20.0, 41),
            ..SequenceConfig::default()
        }
    }

    /// Loss model. Inside, the optical depth falls from 19 to about 1 over
    /// 1000 repetitions, outside from 32 to about 2.
    pub fn loss(self) -> LossModel {
        let p = self.params();
        let (tau1, tau2, loss_amp) = match self {
            Preset::Inside => (1.8e-3, 5.47e-3, 0.002),
            Preset::Outside => (2.2e-3, 4.96e-3, 0.001),
        };
        LossModel {
            od0: p.od,
            tau1,
            tau2,
            t_break: 3e-3,
            loss_center: p.eit_peak() + from_mhz(LOSS_SHIFT_MHZ),
            loss_width: from_mhz(2.0),
            loss_amp,
            eit_loss_boost: 0.5,
        }
    }
}
