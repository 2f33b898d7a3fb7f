//! Finite-difference verification of analytic gradients.
//!
//! Central differences with a fixed step, compared coordinate by
//! coordinate under the guarded relative error
//! `|fd - an| / max(|fd|, |an|, 1)` — the guard keeps near-zero gradients
//! from blowing the ratio up. The training losses are checked against this
//! harness over many random seeds; the acceptance gate pins the tolerance.

use alloc::vec::Vec;

/// Guarded relative error between a finite-difference and analytic value.
#[inline]
pub fn rel_err(fd: f64, an: f64) -> f64 {
    let denom = fd.abs().max(an.abs()).max(1.0);
    (fd - an).abs() / denom
}

/// Central-difference derivative of `f` along coordinate `i` at `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut scratch = x.to_vec();
    scratch[i] = x[i] + eps;
    let fp = f(&scratch);
    scratch[i] = x[i] - eps;
    let fm = f(&scratch);
    (fp - fm) / (2.0 * eps)
}

/// Worst guarded relative error between `analytic` and central differences
/// of `f` over every coordinate of `x`. Lengths must match.
pub fn max_rel_err(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut worst = 0.0f64;
    let mut scratch = x.to_vec();
    for i in 0..x.len() {
        let orig = scratch[i];
        scratch[i] = orig + eps;
        let fp = f(&scratch);
        scratch[i] = orig - eps;
        let fm = f(&scratch);
        scratch[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max(rel_err(fd, analytic[i]));
    }
    worst
}

/// Indices whose guarded relative error exceeds `tol`; handy when a check
/// fails and the offending coordinates matter.
pub fn failing_coords(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    tol: f64,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        let fd = central_diff(&mut f, x, i, eps);
        let e = rel_err(fd, analytic[i]);
        if e > tol {
            out.push((i, e));
        }
    }
    out
}
