//! Naturalistic lead-vehicle acceleration profiles.
//!
//! Piecewise-constant acceleration: hold a uniformly drawn command for a
//! uniformly drawn duration, then redraw. Used for dataset collection and
//! the naturalistic evaluation battery. Draw order per segment — first the
//! acceleration value, then the duration — is part of the determinism
//! contract.

use crate::env::EnvConfig;
use rand::Rng;

/// Segment duration draw range, s.
pub const SEGMENT_MIN_S: f64 = 5.0;
pub const SEGMENT_MAX_S: f64 = 15.0;

/// Stateful generator; one per episode.
#[derive(Clone, Debug)]
pub struct ProfileGen {
    current: f64,
    remaining: u32,
}

impl ProfileGen {
    pub fn new() -> Self {
        ProfileGen { current: 0.0, remaining: 0 }
    }

    /// Lead acceleration command for the next step, redrawing the segment
    /// when the previous one has run out.
    pub fn next_cmd(&mut self, cfg: &EnvConfig, rng: &mut impl Rng) -> f64 {
        if self.remaining == 0 {
            self.current = rng.random_range(cfg.lead_a_min..cfg.lead_a_max);
            let duration = rng.random_range(SEGMENT_MIN_S..SEGMENT_MAX_S);
            let steps = (duration / cfg.dt) as u32;
            self.remaining = steps.max(1);
        }
        self.remaining -= 1;
        self.current
    }
}

impl Default for ProfileGen {
    fn default() -> Self {
        Self::new()
    }
}
