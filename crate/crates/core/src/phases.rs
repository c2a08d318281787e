//! Powers of `i` relating real Clifford supertraces, complex supertraces on
//! the complex spinor module, the index and the spectral flow.
//!
//! Every module that converts between these quantities goes through this
//! table so the conventions cannot drift apart.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// `i^k` for any integer `k`, exact.
pub fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `str_C = (-i)^{n/2} str` on `Σ_C` for even `n`.
pub fn complex_supertrace_phase(n: usize) -> Result<Complex64> {
    if n % 2 != 0 {
        return invalid("complex supertrace phase needs even dimension");
    }
    Ok(i_pow(-(n as i64) / 2))
}

/// Loop-space integral of the Bismut-Chern character as a multiple of the
/// index: `i^{n/2}`.
pub fn index_phase(n: usize) -> Result<Complex64> {
    if n % 2 != 0 {
        return invalid("index phase needs even dimension");
    }
    Ok(i_pow(n as i64 / 2))
}

/// Loop-space integral of the odd character as a multiple of
/// `(2π/T)^{1/2} sf`: `i^{(n+1)/2}`.
pub fn flow_phase(n: usize) -> Result<Complex64> {
    if n % 2 != 1 {
        return invalid("flow phase needs odd dimension");
    }
    Ok(i_pow((n as i64 + 1) / 2))
}

/// `i^{(n+1)/2} (2π/T)^{1/2}`.
pub fn flow_factor(n: usize, t: f64) -> Result<Complex64> {
    if !(t > 0.0) {
        return invalid("time must be positive");
    }
    Ok(flow_phase(n)? * (2.0 * std::f64::consts::PI / t).sqrt())
}

/// Undo a phase: returns `z / phase`, which should be real for consistent
/// inputs.
pub fn strip(z: Complex64, phase: Complex64) -> Complex64 {
    z / phase
}
