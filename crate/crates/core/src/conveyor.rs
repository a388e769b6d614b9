//! Moving optical lattice ("conveyor belt") kinematics.
//!
//! Two counter-propagating beams with frequency difference Δf form a
//! standing wave that travels at `v = λ·Δf/2`. For a piecewise-linear Δf(t)
//! the transported distance is an exact trapezoid sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Validator};

/// Dipole-trap wavelength, m.
pub const LATTICE_WAVELENGTH: f64 = 805e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampKnot {
    /// Time, s.
    pub t: f64,
    /// Beam frequency difference, Hz.
    pub df: f64,
}

/// Piecewise-linear frequency-difference ramp starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConveyorRamp {
    /// Lattice wavelength λ, m.
    pub wavelength: f64,
    pub knots: Vec<RampKnot>,
    /// Final lattice power as a fraction of the initial power. Only sets the
    /// trap depth, so kinematics ignore it.
    #[serde(default = "default_power_fraction")]
    pub power_fraction_end: f64,
}

fn default_power_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportSample {
    pub t: f64,
    pub df: f64,
    pub velocity: f64,
    pub position: f64,
}

impl ConveyorRamp {
    /// Linear ramp from 0 to `peak_df` over `duration`.
    pub fn linear(wavelength: f64, peak_df: f64, duration: f64) -> Result<Self> {
        let ramp = Self {
            wavelength,
            knots: vec![
                RampKnot { t: 0.0, df: 0.0 },
                RampKnot {
                    t: duration,
                    df: peak_df,
                },
            ],
            power_fraction_end: default_power_fraction(),
        };
        ramp.validate()?;
        Ok(ramp)
    }

    /// The transport ramp: 0 → 500 kHz over 100 ms at 805 nm.
    pub fn fiber_transport() -> Self {
        Self::linear(LATTICE_WAVELENGTH, 500e3, 0.1).expect("valid built-in ramp")
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::default();
        v.check(
            self.wavelength > 0.0 && self.wavelength.is_finite(),
            "ramp.wavelength",
            "must be > 0",
        );
        v.check(self.knots.len() >= 2, "ramp.knots", "need at least two knots");
        if let Some(first) = self.knots.first() {
            v.check(first.t == 0.0, "ramp.knots[0].t", "ramp must start at t = 0");
        }
        v.check(
            self.knots.iter().all(|k| k.t.is_finite() && k.df.is_finite()),
            "ramp.knots",
            "knots must be finite",
        );
        v.check(
            self.knots.windows(2).all(|w| w[1].t > w[0].t),
            "ramp.knots",
            "knot times must be strictly increasing",
        );
        v.check(
            (0.0..=1.0).contains(&self.power_fraction_end),
            "ramp.power_fraction_end",
            "must be within [0, 1]",
        );
        v.finish()
    }

    pub fn duration(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.t)
    }

    /// Δf(t), Hz.
    pub fn df_at(&self, t: f64) -> Result<f64> {
        let duration = self.duration();
        if !(0.0..=duration).contains(&t) {
            return Err(Error::domain(format!(
                "t = {t} s outside ramp [0, {duration}] s"
            )));
        }
        let idx = self
            .knots
            .windows(2)
            .position(|w| t <= w[1].t)
            .unwrap_or(self.knots.len() - 2);
        let (a, b) = (self.knots[idx], self.knots[idx + 1]);
        let frac = (t - a.t) / (b.t - a.t);
        Ok(a.df + frac * (b.df - a.df))
    }

    /// Lattice velocity λ·Δf(t)/2, m/s.
    pub fn velocity_at(&self, t: f64) -> Result<f64> {
        Ok(0.5 * self.wavelength * self.df_at(t)?)
    }

    /// Distance travelled up to time `t`, m.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        let df_t = self.df_at(t)?;
        let mut area = 0.0;
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t >= b.t {
                area += 0.5 * (a.df + b.df) * (b.t - a.t);
            } else {
                if t > a.t {
                    area += 0.5 * (a.df + df_t) * (t - a.t);
                }
                break;
            }
        }
        Ok(0.5 * self.wavelength * area)
    }

    /// Total transported distance, m.
    pub fn displacement(&self) -> f64 {
        let area: f64 = self
            .knots
            .windows(2)
            .map(|w| 0.5 * (w[0].df + w[1].df) * (w[1].t - w[0].t))
            .sum();
        0.5 * self.wavelength * area
    }

    /// `n` evenly spaced samples over the ramp (n ≥ 2).
    pub fn profile(&self, n: usize) -> Result<Vec<TransportSample>> {
        if n < 2 {
            return Err(Error::domain("profile needs at least 2 samples"));
        }
        let duration = self.duration();
        (0..n)
            .map(|i| {
                let t = if i + 1 == n {
                    duration
                } else {
                    duration * i as f64 / (n - 1) as f64
                };
                let df = self.df_at(t)?;
                Ok(TransportSample {
                    t,
                    df,
                    velocity: 0.5 * self.wavelength * df,
                    position: self.position_at(t)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn velocity_examples() {
        let zero = ConveyorRamp::linear(LATTICE_WAVELENGTH, 0.0, 0.1).unwrap();
        assert_eq!(zero.velocity_at(0.05).unwrap(), 0.0);
        assert_eq!(zero.displacement(), 0.0);

        let ramp = ConveyorRamp::fiber_transport();
        assert!((ramp.velocity_at(0.1).unwrap() - 0.20125).abs() < 1e-12);
        assert!((ramp.velocity_at(0.05).unwrap() - 0.100625).abs() < 1e-12);
    }

    #[test]
    fn fiber_ramp_distance() {
        let ramp = ConveyorRamp::fiber_transport();
        assert!((ramp.displacement() - 1.00625e-2).abs() < 1e-12);
        assert!((ramp.position_at(0.1).unwrap() - ramp.displacement()).abs() < 1e-15);
    }

    #[test]
    fn outside_ramp_is_domain_error() {
        let ramp = ConveyorRamp::fiber_transport();
        assert!(ramp.velocity_at(-1e-3).is_err());
        assert!(ramp.velocity_at(0.2).is_err());
    }

    #[test]
    fn validation_catches_bad_knots() {
        let mut ramp = ConveyorRamp::fiber_transport();
        ramp.knots.push(RampKnot { t: 0.05, df: 1.0 });
        ramp.wavelength = -1.0;
        match ramp.validate() {
            Err(Error::Validation(fields)) => assert_eq!(fields.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multi_segment_matches_quadrature() {
        let ramp = ConveyorRamp {
            wavelength: LATTICE_WAVELENGTH,
            knots: vec![
                RampKnot { t: 0.0, df: 0.0 },
                RampKnot { t: 0.02, df: 300e3 },
                RampKnot { t: 0.07, df: 300e3 },
                RampKnot { t: 0.1, df: -50e3 },
            ],
            power_fraction_end: 0.5,
        };
        ramp.validate().unwrap();
        // composite Simpson on a grid that contains every knot
        let n = 10_000;
        let h = ramp.duration() / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * ramp.velocity_at((i as f64 * h).min(ramp.duration())).unwrap();
        }
        let quad = acc * h / 3.0;
        assert!((quad - ramp.displacement()).abs() <= 1e-9 * ramp.displacement().abs());
    }

    proptest! {
        #[test]
        fn doubling_duration_doubles_distance(peak in 1.0..1e6f64, dur in 1e-3..1.0f64) {
            let a = ConveyorRamp::linear(LATTICE_WAVELENGTH, peak, dur).unwrap();
            let b = ConveyorRamp::linear(LATTICE_WAVELENGTH, peak, 2.0 * dur).unwrap();
            prop_assert!((b.displacement() - 2.0 * a.displacement()).abs() <= 1e-12 * b.displacement());
        }

        #[test]
        fn linear_in_wavelength_and_amplitude(peak in 1.0..1e6f64, k in 0.1..10.0f64) {
            let base = ConveyorRamp::linear(LATTICE_WAVELENGTH, peak, 0.1).unwrap();
            let amp = ConveyorRamp::linear(LATTICE_WAVELENGTH, k * peak, 0.1).unwrap();
            let wl = ConveyorRamp::linear(k * LATTICE_WAVELENGTH, peak, 0.1).unwrap();
            prop_assert!((amp.displacement() - k * base.displacement()).abs() <= 1e-12 * amp.displacement());
            prop_assert!((wl.displacement() - k * base.displacement()).abs() <= 1e-12 * wl.displacement());
        }

        #[test]
        fn position_is_monotone_for_positive_ramp(t1 in 0.0..0.1f64, t2 in 0.0..0.1f64) {
            let ramp = ConveyorRamp::fiber_transport();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(ramp.position_at(lo).unwrap() <= ramp.position_at(hi).unwrap());
        }
    }
}
