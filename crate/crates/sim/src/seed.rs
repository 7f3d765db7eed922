//! Counter-based seed derivation.
//!
//! Every random stream is keyed by the master seed, the trial coordinates
//! and a purpose tag, so the draws of a trial never depend on which worker
//! runs it or in which order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const GEOMETRY_TAG: &[u8] = b"geometry";
const FRAME_TAG: &[u8] = b"frame";

/// First 8 bytes (little endian) of `SHA-256(master || drop || realization || tag)`.
pub fn derive_seed(master: u64, drop: u64, realization: u64, tag: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(drop.to_le_bytes());
    h.update(realization.to_le_bytes());
    h.update(tag);
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// The seed pair persisted with every record.
///
/// `hi` drives the UE drop (positions and shadowing) and is shared by all
/// realizations of a drop. `lo` drives the fast fading, data and noise of
/// one realization. Both are reused across powers, pilot types, data
/// lengths and algorithms, so those comparisons see common random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrialSeeds {
    pub hi: u64,
    pub lo: u64,
}

impl TrialSeeds {
    pub fn derive(master: u64, drop: usize, realization: usize) -> Self {
        Self {
            hi: derive_seed(master, drop as u64, u64::MAX, GEOMETRY_TAG),
            lo: derive_seed(master, drop as u64, realization as u64, FRAME_TAG),
        }
    }

    pub fn geometry_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.hi)
    }

    pub fn frame_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.lo)
    }
}
