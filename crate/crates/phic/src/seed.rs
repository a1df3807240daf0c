//! Deterministic random-stream derivation.
//!
//! Every random decision in the pipeline hangs off one top-level seed plus a
//! textual scope ("synth/subject/17", "folds/p12/s3", ...). Streams for
//! distinct scopes are independent, so work units can run in any order or in
//! parallel without changing results, and a stage can be re-run in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// 64-bit seed for record-keeping (manifests, model metadata).
pub fn derive_seed(base: u64, scope: &str) -> u64 {
    let digest = digest(base, scope);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Full-entropy RNG for the given scope.
pub fn derive_rng(base: u64, scope: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(base, scope))
}

fn digest(base: u64, scope: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(scope.as_bytes());
    hasher.finalize().into()
}
