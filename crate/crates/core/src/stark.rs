//! Quadratic Stark shift of an S state, `shift = ½·α·E²`.
//!
//! Units follow the usual tabulation: α in MHz·cm²/V², E in V/cm, shift in
//! MHz (cyclic, not angular).

use crate::error::{Error, Result};

/// Scalar polarizability of 29S₁/₂, MHz·cm²/V².
pub const ALPHA_29S: f64 = 1.14;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("polarizability must be > 0, got {alpha}")))
    }
}

/// Shift in MHz produced by a field of `field` V/cm.
pub fn shift_from_field(field: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(field >= 0.0 && field.is_finite()) {
        return Err(Error::domain(format!("field must be >= 0, got {field}")));
    }
    Ok(0.5 * alpha * field * field)
}

/// Field magnitude in V/cm that produces `shift` MHz.
pub fn field_from_shift(shift: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::domain(format!("shift must be >= 0, got {shift}")));
    }
    Ok((2.0 * shift / alpha).sqrt())
}
