//! Parameter estimation: damped least squares for lineshapes and weighted
//! linear regression for piecewise exponential decays.

pub mod decay;
pub mod lm;
mod spectrum;

pub use decay::{fit_two_segment_decay, search_common_breakpoint, DecayFit, DecayOptions, DecayPoint, SegmentFit};
pub use spectrum::{
    fit_eit, fit_od, has_eit_window, EitInit, FitConfig, FitKind, FitResult, OdInit, ParamErrors,
    Spectrum, SpectrumPoint,
};
