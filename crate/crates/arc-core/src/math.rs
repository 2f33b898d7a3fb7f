//! Scalar math routed through libm.
//!
//! `core` does not provide transcendental functions, and the platform libm
//! shipped with `std` is not guaranteed to be bit-identical across targets.
//! Funnelling every exp/ln/tanh/sqrt through this module keeps the whole
//! crate `no_std`-clean and makes checkpoints and logs reproducible across
//! machines.

/// Natural exponential.
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Square root.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Hyperbolic tangent.
#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Logistic sigmoid `1 / (1 + e^-x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// ln(2π), computed (not hard-coded) so every call site shares the exact
/// same bits as the differentiation tape's `Ln` op would produce.
#[inline]
pub fn ln_2pi() -> f64 {
    ln(2.0 * core::f64::consts::PI)
}

/// Softplus `ln(1 + e^x)`, written to avoid overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    // For x >> 0, ln(1 + e^x) = x + ln(1 + e^-x); the naive form overflows.
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}
