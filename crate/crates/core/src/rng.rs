//! Seed derivation. Every random stream in a run is a ChaCha8 stream keyed
//! by the master seed, selected by `(agent, purpose)`, so streams never
//! overlap and each one can be replayed on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Explanatory points `xi`.
    Explanatory = 0,
    /// Output noise `eta`.
    Noise = 1,
    /// Send-flag draws and tuple selection.
    Protocol = 2,
    /// Placement jitter of the per-agent samplers.
    Layout = 3,
    /// Random topology generation.
    Topology = 4,
}

pub fn stream(master: u64, agent: AgentId, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((agent as u64) << 8) | purpose as u64);
    rng
}

/// SplitMix64 finalizer; used to derive independent seeds for replicas.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
