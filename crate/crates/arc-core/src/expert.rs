//! Scripted car-following expert and demonstration dataset collection.
//!
//! The expert is a proportional controller on headway error and relative
//! velocity: `pedal = clip(k_h * (t_h - 2) + k_v * v_rel, -1, 1)`, which
//! settles near a two-second headway. Dataset collection runs it against
//! naturalistic lead profiles across the friction range and records
//! (observation, pedal) pairs for imitation learning.
//!
//! The demonstrator models a human driver: it applies the control law to
//! the scene as perceived [`DEMO_REACTION_S`] earlier (perception-reaction
//! latency), while the log pairs the *current* observation with the pedal
//! currently applied — the same pairing a real drive logger produces. In
//! smooth traffic the two coincide and the demonstrations are tight; in
//! fast transients the recorded action lags the state, so a policy cloned
//! from the data inherits a human-like response delay.

use crate::env::{self, EnvConfig};
use crate::profile::ProfileGen;
use crate::rng::SeedStream;
use alloc::vec::Vec;
use core::fmt;

/// Headway gain, 1/s.
pub const K_H: f64 = 0.8;
/// Relative-velocity gain, s/m · m/s.
pub const K_V: f64 = 0.15;
/// Headway setpoint, s.
pub const TARGET_T_H: f64 = 2.0;
/// Demonstrator perception-reaction latency, s: the pedal applied at time t
/// is the law evaluated on the scene at t minus this.
pub const DEMO_REACTION_S: f64 = 1.0;

/// Expert pedal command from raw (un-normalized) headway and relative
/// velocity.
pub fn expert_pedal(t_h: f64, v_rel: f64) -> f64 {
    (K_H * (t_h - TARGET_T_H) + K_V * v_rel).clamp(-1.0, 1.0)
}

/// One demonstration pair: normalized protagonist observation and the
/// pedal the expert applied there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetRow {
    pub obs: [f64; 3],
    pub action: f64,
}

/// Provenance stamped alongside the rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub episodes: u32,
    pub config_hash: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
    pub meta: DatasetMeta,
}

/// The expert is expected to drive collision-free; a crash means the
/// configuration is outside its competence and the dataset would be
/// poisoned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectError {
    ExpertCollision { episode: u32, step: u32 },
    NoEpisodes,
}

impl fmt::Display for CollectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectError::ExpertCollision { episode, step } => write!(
                f,
                "expert collided in episode {episode} at step {step}; \
                 dataset collection aborted"
            ),
            CollectError::NoEpisodes => write!(f, "dataset needs at least one episode"),
        }
    }
}

impl core::error::Error for CollectError {}

/// Run the expert for `episodes` full episodes and collect every
/// (observation, action) pair. Per episode, one substream drawn from
/// `root(seed) -> "datagen" -> episode` covers the friction draw, the
/// reset, and the lead profile, in that order.
pub fn collect_dataset(
    cfg: &EnvConfig,
    episodes: u32,
    seed: u64,
) -> Result<Dataset, CollectError> {
    if episodes == 0 {
        return Err(CollectError::NoEpisodes);
    }
    let stream = SeedStream::root(seed).child("datagen");
    let delay = ((DEMO_REACTION_S / cfg.dt) as usize).max(1);
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let mut rng = stream.child_idx(ep as u64).rng();
        let ep_cfg = cfg.with_mu(cfg.sample_mu(&mut rng));
        let mut state = env::reset(&ep_cfg, &mut rng);
        let mut profile = ProfileGen::new();
        // Perceived (t_h, v_rel) history; until the buffer fills, the
        // demonstrator is still reacting to the scene it joined at.
        let mut percepts: Vec<(f64, f64)> = Vec::new();
        loop {
            let obs = env::observe_protagonist(&state, &ep_cfg);
            percepts.push((state.t_h(&ep_cfg), state.v_rel()));
            let (t_h_seen, v_rel_seen) = if percepts.len() > delay {
                percepts[percepts.len() - 1 - delay]
            } else {
                percepts[0]
            };
            let pedal = expert_pedal(t_h_seen, v_rel_seen);
            rows.push(DatasetRow { obs, action: pedal });
            let lead_cmd = profile.next_cmd(&ep_cfg, &mut rng);
            let info = env::step(&mut state, &ep_cfg, pedal, lead_cmd);
            if state.collided {
                return Err(CollectError::ExpertCollision { episode: ep, step: state.steps });
            }
            if info.done {
                break;
            }
        }
    }
    Ok(Dataset {
        rows,
        meta: DatasetMeta { seed, episodes, config_hash: cfg.fingerprint() },
    })
}
