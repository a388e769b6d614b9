//! Unit conventions.
//!
//! Internally all rates and detunings are angular frequencies (rad/s).
//! At every I/O boundary a value in "MHz" means ω/2π in units of 10⁶ Hz.

use std::f64::consts::TAU;

/// One MHz expressed as an angular frequency, 2π·10⁶ rad/s.
pub const MHZ: f64 = TAU * 1.0e6;

/// Converts a cyclic frequency in MHz to rad/s.
#[inline]
pub fn from_mhz(mhz: f64) -> f64 {
    mhz * MHZ
}

/// Converts an angular frequency in rad/s to MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / MHZ
}

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mhz_conversion_is_two_pi() {
        assert!((from_mhz(1.0) - TAU * 1e6).abs() < 1e-6);
        assert!((to_mhz(from_mhz(6.07)) - 6.07).abs() < 1e-12);
    }
}
