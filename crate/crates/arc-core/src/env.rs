//! Longitudinal car-following environment.
//!
//! Two point-mass vehicles on one lane: a lead vehicle whose acceleration is
//! commanded directly (the adversary's action, or a scripted profile), and a
//! host vehicle driven through a pedal in [-1, 1] (the protagonist's
//! action). One step advances the pair by `dt` with, in order:
//!
//! 1. lead command clipped to the acceleration bounds (braking further
//!    limited by the friction circle -mu*g, shared with the host — both
//!    vehicles run on the same surface), then clipped again so the lead
//!    velocity stays inside its configured band;
//! 2. host pedal mapped to a demanded acceleration (asymmetric gas/brake
//!    authority), limited to the friction circle ±mu*g, and passed through a
//!    first-order actuator lag with time constant tau (exact discretization,
//!    `alpha = 1 - e^(-dt/tau)`);
//! 3. semi-implicit Euler: both velocities first, then the gap
//!    `x_rel += (v_lead - v) * dt` using the new velocities;
//! 4. collision when the gap reaches zero (sticky; the gap is floored at 0).
//!
//! Time headway `t_h = x_rel / max(v, v_floor)` capped at `t_h_max` guards
//! the division; the adversary reward is `min(1/t_h, 100)`, so a collision
//! step earns exactly the cap.

use rand::Rng;
use sha2::{Digest, Sha256};

/// Observation normalization constants (inputs are raw value / constant).
pub const NORM_V: f64 = 40.0;
pub const NORM_A: f64 = 10.0;
pub const NORM_V_REL: f64 = 20.0;
pub const NORM_T_H: f64 = 10.0;

/// Static environment parameters for one episode.
///
/// `mu` is the friction coefficient in force for the episode; episode
/// drivers draw it from `[mu_min, mu_max]` (see [`EnvConfig::with_mu`]).
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Hard episode length cap, steps.
    pub episode_cap: u32,
    /// Friction coefficient for this episode.
    pub mu: f64,
    /// Per-episode friction draw range.
    pub mu_min: f64,
    pub mu_max: f64,
    /// Lead velocity band, m/s; the lead is clipped to stay inside.
    pub v_lead_min: f64,
    pub v_lead_max: f64,
    /// Lead acceleration command bounds, m/s².
    pub lead_a_min: f64,
    pub lead_a_max: f64,
    /// Demanded host acceleration at pedal = +1 / -1, m/s².
    pub pedal_gas_gain: f64,
    pub pedal_brake_gain: f64,
    /// Host actuator lag time constant, s.
    pub tau: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Initial time-headway draw range, s.
    pub h0_min: f64,
    pub h0_max: f64,
    /// Initial closing-speed draw range, m/s. `closing_max == 0` starts the
    /// host matched to the lead; a positive range models approach encounters
    /// (host arriving faster than the lead, as when a slower vehicle merges
    /// ahead) with the offset drawn uniformly from [closing_min, closing_max].
    pub closing_min: f64,
    pub closing_max: f64,
    /// Velocity floor and headway cap guarding t_h = x_rel / v.
    pub v_floor: f64,
    pub t_h_max: f64,
}

impl Default for EnvConfig {
    /// Training configuration: the lead velocity band is the range where
    /// collisions concentrate; evaluation batteries widen it.
    fn default() -> Self {
        EnvConfig {
            dt: 0.1,
            episode_cap: 3000,
            mu: 1.0,
            mu_min: 0.4,
            mu_max: 1.0,
            v_lead_min: 12.0,
            v_lead_max: 30.0,
            lead_a_min: -6.0,
            lead_a_max: 2.0,
            pedal_gas_gain: 2.5,
            pedal_brake_gain: 9.0,
            tau: 0.2,
            gravity: 9.81,
            h0_min: 1.5,
            h0_max: 2.5,
            closing_min: 0.0,
            closing_max: 0.0,
            v_floor: 0.5,
            t_h_max: 100.0,
        }
    }
}

impl EnvConfig {
    /// Copy of this config with a different episode friction.
    pub fn with_mu(&self, mu: f64) -> Self {
        let mut c = self.clone();
        c.mu = mu;
        c
    }

    /// Draw an episode friction uniformly from the configured range.
    pub fn sample_mu(&self, rng: &mut impl Rng) -> f64 {
        if self.mu_min == self.mu_max {
            self.mu_min
        } else {
            rng.random_range(self.mu_min..self.mu_max)
        }
    }

    /// Reject configurations outside the physical / paper ranges. Returns
    /// the name of the offending field.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.dt > 0.0) {
            return Err("dt");
        }
        if self.episode_cap == 0 {
            return Err("episode_cap");
        }
        if !(self.mu >= 0.4 && self.mu <= 1.0) {
            return Err("mu");
        }
        if !(self.mu_min >= 0.4 && self.mu_max <= 1.0 && self.mu_min <= self.mu_max) {
            return Err("mu range");
        }
        if !(self.v_lead_min > 0.0 && self.v_lead_min < self.v_lead_max) {
            return Err("lead velocity bounds");
        }
        if !(self.lead_a_min < 0.0 && self.lead_a_min < self.lead_a_max) {
            return Err("lead acceleration bounds");
        }
        if !(self.pedal_gas_gain > 0.0 && self.pedal_brake_gain > 0.0) {
            return Err("pedal gains");
        }
        if !(self.tau > 0.0) {
            return Err("tau");
        }
        if !(self.h0_min > 0.0 && self.h0_min <= self.h0_max) {
            return Err("initial headway range");
        }
        if !(self.closing_min >= 0.0
            && self.closing_min <= self.closing_max
            && self.closing_max <= 16.0)
        {
            return Err("closing range");
        }
        if !(self.v_floor > 0.0) {
            return Err("v_floor");
        }
        if !(self.t_h_max > 0.0) {
            return Err("t_h_max");
        }
        Ok(())
    }

    /// Order-stable hash of every field; stamped into dataset metadata so a
    /// dataset can be matched to the environment that produced it.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"env-config");
        for v in [
            self.dt,
            self.mu,
            self.mu_min,
            self.mu_max,
            self.v_lead_min,
            self.v_lead_max,
            self.lead_a_min,
            self.lead_a_max,
            self.pedal_gas_gain,
            self.pedal_brake_gain,
            self.tau,
            self.gravity,
            self.h0_min,
            self.h0_max,
            self.closing_min,
            self.closing_max,
            self.v_floor,
            self.t_h_max,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update(self.episode_cap.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest length"))
    }
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoneReason {
    Collision,
    TimeCap,
}

/// Kinematic state of the vehicle pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    /// Bumper-to-bumper gap, m; never negative (collision floors it at 0).
    pub x_rel: f64,
    /// Host velocity, m/s.
    pub v: f64,
    /// Host acceleration (actuator state), m/s².
    pub a: f64,
    /// Lead velocity, m/s.
    pub v_lead: f64,
    /// Lead acceleration applied last step (after all clipping), m/s².
    pub a_lead: f64,
    /// Steps taken so far.
    pub steps: u32,
    /// Sticky collision flag.
    pub collided: bool,
}

impl EnvState {
    /// Relative velocity `v_lead - v`; positive when the gap is opening.
    pub fn v_rel(&self) -> f64 {
        self.v_lead - self.v
    }

    /// Current time headway under the config's floor and cap.
    pub fn t_h(&self, cfg: &EnvConfig) -> f64 {
        headway(self.x_rel, self.v, cfg)
    }

    /// Episode over: collision or time cap.
    pub fn done(&self, cfg: &EnvConfig) -> bool {
        self.collided || self.steps >= cfg.episode_cap
    }
}

/// Per-step summary handed back by [`step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Post-step time headway, s.
    pub t_h: f64,
    /// Adversary reward for the step, in (0, 100].
    pub reward: f64,
    pub done: bool,
    pub reason: Option<DoneReason>,
}

/// Start an episode: lead velocity uniform in its band, host matched to it
/// (plus a closing offset when `closing_max > 0`), gap placed so the initial
/// headway is uniform in the configured range. Draw order (lead velocity,
/// then closing offset if enabled, then headway) is part of the determinism
/// contract; the headway multiplies the host velocity, keeping the reported
/// t_h at the drawn value.
pub fn reset(cfg: &EnvConfig, rng: &mut impl Rng) -> EnvState {
    let v_lead0 = rng.random_range(cfg.v_lead_min..cfg.v_lead_max);
    let closing = if cfg.closing_max > cfg.closing_min {
        rng.random_range(cfg.closing_min..cfg.closing_max)
    } else {
        cfg.closing_min
    };
    let v0 = v_lead0 + closing;
    let h0 = rng.random_range(cfg.h0_min..cfg.h0_max);
    EnvState {
        x_rel: h0 * v0,
        v: v0,
        a: 0.0,
        v_lead: v_lead0,
        a_lead: 0.0,
        steps: 0,
        collided: false,
    }
}

/// Advance one step. `pedal` is clamped to [-1, 1]; `lead_cmd` is the raw
/// lead acceleration command in m/s².
///
/// Panics when called on a finished episode (usage error).
pub fn step(state: &mut EnvState, cfg: &EnvConfig, pedal: f64, lead_cmd: f64) -> StepInfo {
    assert!(!state.done(cfg), "step called on a finished episode");

    // Lead vehicle: clip the command (braking additionally limited by the
    // friction circle — both vehicles share the road surface), then clip the
    // velocity into its band; the recorded acceleration is what the velocity
    // actually did. When the band did not bite, report the command itself
    // rather than the difference quotient — recovering it from the
    // velocities reintroduces rounding that can land one ulp outside
    // [lead_a_min, lead_a_max].
    let lead_floor = cfg.lead_a_min.max(-(cfg.mu * cfg.gravity));
    let a_cmd_lead = lead_cmd.clamp(lead_floor, cfg.lead_a_max);
    let v_lead_unclamped = state.v_lead + cfg.dt * a_cmd_lead;
    let v_lead_next = v_lead_unclamped.clamp(cfg.v_lead_min, cfg.v_lead_max);
    let a_lead = if v_lead_next == v_lead_unclamped {
        a_cmd_lead
    } else {
        ((v_lead_next - state.v_lead) / cfg.dt).clamp(lead_floor, cfg.lead_a_max)
    };

    // Host vehicle: pedal map -> friction limit -> actuator lag.
    let pedal = pedal.clamp(-1.0, 1.0);
    let demanded = if pedal >= 0.0 {
        pedal * cfg.pedal_gas_gain
    } else {
        pedal * cfg.pedal_brake_gain
    };
    let limit = cfg.mu * cfg.gravity;
    let commanded = demanded.clamp(-limit, limit);
    let alpha = 1.0 - crate::math::exp(-cfg.dt / cfg.tau);
    let a_next = state.a + alpha * (commanded - state.a);

    // Semi-implicit Euler: velocities first, then the gap from the new
    // velocities. Host velocity never goes negative.
    let v_next = (state.v + cfg.dt * a_next).max(0.0);
    let mut x_rel_next = state.x_rel + cfg.dt * (v_lead_next - v_next);
    let collided_now = x_rel_next <= 0.0;
    if collided_now {
        x_rel_next = 0.0;
    }

    state.x_rel = x_rel_next;
    state.v = v_next;
    state.a = a_next;
    state.v_lead = v_lead_next;
    state.a_lead = a_lead;
    state.steps += 1;
    state.collided |= collided_now;

    let t_h = state.t_h(cfg);
    let done = state.done(cfg);
    let reason = if state.collided {
        Some(DoneReason::Collision)
    } else if done {
        Some(DoneReason::TimeCap)
    } else {
        None
    };
    StepInfo { t_h, reward: adversary_reward(t_h), done, reason }
}

/// Time headway `x_rel / v` with a velocity floor and a cap.
pub fn headway(x_rel: f64, v: f64, cfg: &EnvConfig) -> f64 {
    debug_assert!(x_rel >= 0.0, "headway expects a non-negative gap");
    let t_h = x_rel / v.max(cfg.v_floor);
    t_h.min(cfg.t_h_max)
}

/// Adversary step reward `min(1/t_h, 100)`; a zero headway earns the cap.
pub fn adversary_reward(t_h: f64) -> f64 {
    debug_assert!(t_h >= 0.0);
    (1.0 / t_h).min(100.0)
}

/// Protagonist observation `(v, v_rel, t_h)` normalized.
pub fn observe_protagonist(state: &EnvState, cfg: &EnvConfig) -> [f64; 3] {
    [
        state.v / NORM_V,
        state.v_rel() / NORM_V_REL,
        state.t_h(cfg) / NORM_T_H,
    ]
}

/// Inverse of [`observe_protagonist`]: recover raw `(v, v_rel, t_h)`.
pub fn denormalize_protagonist(obs: &[f64; 3]) -> (f64, f64, f64) {
    (obs[0] * NORM_V, obs[1] * NORM_V_REL, obs[2] * NORM_T_H)
}

/// Adversary observation `(v, a, v_rel, t_h)` normalized — the pre-training
/// four-input variant.
pub fn observe_adversary(state: &EnvState, cfg: &EnvConfig) -> [f64; 4] {
    [
        state.v / NORM_V,
        state.a / NORM_A,
        state.v_rel() / NORM_V_REL,
        state.t_h(cfg) / NORM_T_H,
    ]
}

/// Five-input observation for the fine-tuning adversary: the four state
/// components plus the protagonist's raw pedal appended verbatim (it is
/// already unit-scaled). Out-of-range pedals are clipped and flagged.
pub fn observe_adversary_arc(
    state: &EnvState,
    cfg: &EnvConfig,
    a_p: f64,
) -> ([f64; 5], bool) {
    let base = observe_adversary(state, cfg);
    let clipped = a_p.clamp(-1.0, 1.0);
    (
        [base[0], base[1], base[2], base[3], clipped],
        clipped != a_p,
    )
}
