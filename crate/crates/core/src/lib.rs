//! Forward simulation and inverse analysis of pulsed ladder-EIT spectroscopy
//! with cold Rydberg atoms transported into a hollow-core fiber.
//!
//! The crate is split along the data flow of an experiment:
//!
//! - [`model`]: closed-form Lorentzian and ladder-EIT transmission.
//! - [`stark`]: quadratic Stark shift to electric field conversion.
//! - [`conveyor`]: moving-lattice transport kinematics.
//! - [`sim`]: repetition-resolved traces with atom loss and photon shot noise.
//! - [`fit`]: damped least-squares lineshape fits and two-segment decay fits.
//! - [`analysis`]: moving averages, difference maps, cuts and regime detection.
//! - [`io`]: configuration, presets, CSV/JSON formats and figure pipelines.
//!
//! Every rate and detuning is an angular frequency in rad/s. File formats and
//! the command line speak MHz, meaning ω/2π; see [`units`].

pub mod analysis;
pub mod conveyor;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod sim;
pub mod stark;
pub mod units;

pub use error::{Error, Result};
