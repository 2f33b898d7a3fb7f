//! Core library for adversarially robust vehicle-following control.
//!
//! Everything in this crate is deterministic, allocation-only computation:
//! the longitudinal driving environment, small dense networks with a
//! reverse-mode tape, A2C adversary training, minimax protagonist
//! fine-tuning, and the evaluation batteries. File formats, the CLI, and
//! thread orchestration live in the companion `arc-cli` crate.
//!
//! Determinism is a contract, not an aspiration: all transcendental math
//! goes through [`math`] (libm, bit-stable across platforms), all randomness
//! is drawn from named [`rng::SeedStream`] substreams, and reductions are
//! written with a fixed association order. Two runs with the same seed and
//! configuration produce bit-identical parameters, logs, and metrics.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod a2c;
pub mod arc;
pub mod env;
pub mod eval;
pub mod expert;
pub mod gradcheck;
pub mod il;
pub mod math;
pub mod nn;
pub mod optim;
pub mod profile;
pub mod rng;
pub mod tape;
pub mod tensor;
