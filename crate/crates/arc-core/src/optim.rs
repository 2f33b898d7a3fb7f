//! RMSProp with per-coefficient caches.
//!
//! Update rule, applied elementwise:
//!
//! ```text
//! cache <- rho * cache + (1 - rho) * g^2
//! param <- param - lr * g / (sqrt(cache) + eps)
//! ```
//!
//! A gradient containing any non-finite value rejects the whole update —
//! parameters *and* caches stay untouched — and the caller is told, so
//! training loops can count incidents instead of silently corrupting state.

use crate::math;
use crate::nn::ParamSet;

/// Hyperparameters; `rho` and `eps` rarely move from their defaults.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl RmsProp {
    /// Standard decay 0.9 and epsilon 1e-8.
    pub fn new(lr: f64) -> Self {
        RmsProp { lr, rho: 0.9, eps: 1e-8 }
    }
}

/// What happened to one proposed update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Gradient had a NaN or infinity; nothing was modified.
    RejectedNonFinite,
}

/// Optimizer state for one parameter set: a same-shaped cache of squared
/// gradient averages.
#[derive(Clone, Debug)]
pub struct RmsPropState<P: ParamSet + Clone> {
    cache: P,
}

impl<P: ParamSet + Clone> RmsPropState<P> {
    /// Zero-initialized cache shaped like `like`.
    pub fn new(like: &P) -> Self {
        let mut cache = like.clone();
        cache.zero();
        RmsPropState { cache }
    }

    /// Apply one RMSProp step of `grads` to `params`.
    pub fn step(&mut self, opt: &RmsProp, params: &mut P, grads: &P) -> UpdateOutcome {
        if !grads.all_finite() {
            return UpdateOutcome::RejectedNonFinite;
        }
        let gs = grads.tensors();
        let mut caches = self.cache.tensors_mut();
        let mut ps = params.tensors_mut();
        assert_eq!(gs.len(), ps.len(), "gradient/parameter shape mismatch");
        for ((p, c), g) in ps.iter_mut().zip(caches.iter_mut()).zip(gs) {
            let pd = p.data_mut();
            let cd = c.data_mut();
            for ((pv, cv), &gv) in pd.iter_mut().zip(cd.iter_mut()).zip(g.data()) {
                *cv = opt.rho * *cv + (1.0 - opt.rho) * gv * gv;
                *pv -= opt.lr * gv / (math::sqrt(*cv) + opt.eps);
            }
        }
        UpdateOutcome::Applied
    }
}
