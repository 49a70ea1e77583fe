//! Named sub-seeds derived from one top-level seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Purpose labels used across the pipeline.
pub mod streams {
    pub const EVAL_SPLIT: &str = "eval-split";
    pub const VAL_SPLIT: &str = "val-split";
    pub const SUBSAMPLE: &str = "subsample";
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const ALIGNMENT_SPLIT: &str = "alignment-split";
    pub const VERBAL_SHOTS: &str = "verbal-shots";
}

pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Sub-seed indexed by an integer (per-question, per-stage).
pub fn indexed_seed(seed: u64, name: &str, index: u64) -> u64 {
    sub_seed(sub_seed(seed, name), &index.to_string())
}

pub fn rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, name))
}
