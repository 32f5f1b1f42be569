#![allow(dead_code)]

pub mod ref_aes;
pub mod ref_sha3;

use bkd_core::{Ledger, MasterSecret, Pulse, PulseStore};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// AES_COMPOSE_V1 recomputed from the written construction with the
/// reference cipher.
pub fn aes_compose_oracle(key: &[u8; 32], rand_out: &[u8; 64]) -> [u8; 32] {
    let r = |k: usize| -> [u8; 16] { rand_out[16 * k..16 * k + 16].try_into().unwrap() };
    let (r1, r2, r3, r4) = (r(0), r(1), r(2), r(3));
    let ctr = |j: u8| -> [u8; 16] {
        let mut c = [0u8; 16];
        c[15] = j;
        c
    };
    let xor = |a: [u8; 16], b: [u8; 16]| -> [u8; 16] { std::array::from_fn(|i| a[i] ^ b[i]) };
    let swap = |x: [u8; 16]| -> [u8; 16] { std::array::from_fn(|i| x[(i + 8) % 16]) };
    let a = xor(r1, r3);
    let b = xor(r2, r4);
    let c1 = ref_aes::encrypt_block(key, &xor(xor(a, swap(b)), ctr(1)));
    let c2 = ref_aes::encrypt_block(key, &xor(xor(b, swap(a)), ctr(2)));
    let mut out = [0u8; 32];
    out[..16].copy_from_slice(&c1);
    out[16..].copy_from_slice(&c2);
    out
}

pub fn sha3_derive_oracle(key: &[u8; 32], pulse_index: u64, rand_out: &[u8; 64]) -> [u8; 32] {
    let mut pre = b"BKD-v1-derive".to_vec();
    pre.extend_from_slice(key);
    pre.extend_from_slice(&pulse_index.to_be_bytes());
    pre.extend_from_slice(rand_out);
    assert_eq!(pre.len(), 117);
    ref_sha3::sha3_256(&pre)
}

pub fn mac_oracle(auth: &[u8; 32], transcript: &[u8]) -> [u8; 32] {
    let mut pre = b"BKD-v1-mac".to_vec();
    pre.extend_from_slice(auth);
    pre.extend_from_slice(transcript);
    ref_sha3::sha3_256(&pre)
}

pub fn chain_hash_oracle(p: &Pulse) -> [u8; 32] {
    let s = format!(
        "{}|{}|{}|{}|{}",
        p.version,
        p.index,
        p.timestamp,
        hex::encode(p.rand_out),
        hex::encode(p.prev_hash)
    );
    ref_sha3::sha3_256(s.as_bytes())
}

pub fn random_secret<R: RngCore>(rng: &mut R, derivation_blocks: usize) -> MasterSecret {
    let mut bytes = vec![0u8; 32 * (derivation_blocks + 1)];
    rng.fill_bytes(&mut bytes);
    MasterSecret::new(bytes).unwrap()
}

pub fn random_store<R: RngCore>(rng: &mut R, pulses: usize) -> PulseStore {
    let start = rng.gen_range(1_600_000_000..1_800_000_000);
    PulseStore::generate(rng, pulses, start).unwrap()
}

/// A ledger rebuilt from the same secret, as a separate party would hold it.
pub fn fresh_party(secret: &MasterSecret, group: &str) -> Ledger {
    Ledger::init(
        &MasterSecret::new(secret.as_bytes().to_vec()).unwrap(),
        group,
    )
    .unwrap()
}

/// An independent copy of a pulse history, as fetched by another party.
pub fn copy_store(store: &PulseStore) -> PulseStore {
    PulseStore::from_pulses(store.snapshot()).unwrap()
}

pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// The unmixed fold (`AES(A ^ ctr1) || AES(B ^ ctr2)`), kept to show why
/// the cross-mix is needed: each pulse bit reaches only one output half.
pub fn unmixed_fold_oracle(key: &[u8; 32], rand_out: &[u8; 64]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for j in 0..2 {
        let mut block: [u8; 16] =
            std::array::from_fn(|k| rand_out[16 * j + k] ^ rand_out[16 * (j + 2) + k]);
        block[15] ^= j as u8 + 1;
        out[16 * j..16 * j + 16].copy_from_slice(&ref_aes::encrypt_block(key, &block));
    }
    out
}
