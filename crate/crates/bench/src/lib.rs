//! Shared fixtures for the benchmarks.

use bkd_core::{partition_master, KeyBlockSet, MasterSecret, PulseStore};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng() -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(0xb3ac0)
}

/// Key blocks from a random secret of `blocks + 1` blocks.
pub fn key_blocks(rng: &mut ChaCha20Rng, blocks: usize) -> KeyBlockSet {
    let mut bytes = vec![0u8; (blocks + 1) * 32];
    rng.fill_bytes(&mut bytes);
    partition_master(&MasterSecret::new(bytes).expect("aligned secret"))
}

pub fn store(rng: &mut ChaCha20Rng, pulses: usize) -> PulseStore {
    PulseStore::generate(rng, pulses, 1_700_000_000).expect("generated chain is valid")
}
