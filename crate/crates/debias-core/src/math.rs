//! Float helpers that work with and without `std`.
//!
//! The standard library's transcendental methods are not available in `core`,
//! so `no_std` builds route through `libm`. Both paths are deterministic for
//! a given build; tests and tolerances do not depend on which one is active.

#[cfg(feature = "std")]
pub(crate) fn exp(x: f64) -> f64 {
    x.exp()
}

#[cfg(not(feature = "std"))]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(feature = "std")]
pub(crate) fn ln(x: f64) -> f64 {
    x.ln()
}

#[cfg(not(feature = "std"))]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
pub(crate) fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(feature = "std"))]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `base^exp` for the Adam bias-correction terms (`exp` is a step count).
#[cfg(feature = "std")]
pub(crate) fn powi(base: f64, exp: u64) -> f64 {
    base.powi(exp.min(i32::MAX as u64) as i32)
}

#[cfg(not(feature = "std"))]
pub(crate) fn powi(base: f64, exp: u64) -> f64 {
    libm::pow(base, exp as f64)
}
