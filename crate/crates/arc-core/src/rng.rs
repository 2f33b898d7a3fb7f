//! Deterministic seed streams.
//!
//! Every random decision in a run is drawn from a named substream derived
//! from the single root seed by hash chaining: the root key is
//! `SHA-256("arc-root" || seed_le)`, and children are
//! `SHA-256(parent || label)` / `SHA-256(parent || index_le)`. A substream's
//! draws therefore never depend on how much randomness a sibling consumed,
//! which is what makes paired comparisons (same battery episodes under
//! different policies) and worker-count-independent training streams work.
//!
//! The generator behind each key is ChaCha8, giving a portable, seekable,
//! platform-independent sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A point in the seed-derivation tree; cheap to copy and fork.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    /// Root of the derivation tree for a run.
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"arc-root");
        h.update(seed.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    /// Child stream named by a string label.
    pub fn child(&self, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(label.as_bytes());
        Self { key: h.finalize().into() }
    }

    /// Child stream named by an index (episode number, worker id, ...).
    pub fn child_idx(&self, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(index.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }
}
