//! Master-secret partitioning, the session-key derivation suites, and the
//! keyed hash used to authenticate proposals.
//!
//! A master secret of `32 * (n + 1)` bytes is cut into `n + 1` key blocks.
//! Block 0 is reserved for authentication; blocks `1..=n` are each consumed by
//! exactly one session derivation.

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes256;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use subtle::ConstantTimeEq;
use thiserror::Error;
use zeroize::Zeroize;

use crate::beacon::Pulse;

/// Size of one key block and of every session key, in bytes (256 bits).
pub const BLOCK_LEN: usize = 32;
/// Size of a pulse's random output, in bytes (512 bits).
pub const RAND_OUT_LEN: usize = 64;
/// SHA3-256 digest length.
pub const HASH_LEN: usize = 32;

const AES_BLOCK_LEN: usize = 16;
const DERIVE_DOMAIN: &[u8] = b"BKD-v1-derive";
const MAC_DOMAIN: &[u8] = b"BKD-v1-mac";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KdfError {
    #[error("SecretTooShort: master secret is {len} bytes, need at least {}", 2 * BLOCK_LEN)]
    SecretTooShort { len: usize },
    #[error("SecretNotAligned: master secret is {len} bytes, not a multiple of {BLOCK_LEN}")]
    SecretNotAligned { len: usize },
    #[error("BlockNotFresh: key block {index} is {state:?}")]
    BlockNotFresh { index: u32, state: BlockState },
    #[error("PulseIntegrity: pulse {index} fails chain-hash recomputation")]
    PulseIntegrity { index: u64 },
    #[error("NotAuthBlock: block {index} is not the authentication block")]
    NotAuthBlock { index: u32 },
    #[error("EmptyTranscript")]
    EmptyTranscript,
    #[error("BadTagLength: tag is {len} bytes, expected {HASH_LEN}")]
    BadTagLength { len: usize },
    #[error("invalid block state transition {from:?} -> {to:?}")]
    InvalidTransition { from: BlockState, to: BlockState },
}

/// The pre-shared secret `M`. Wiped on drop.
#[derive(Clone)]
pub struct MasterSecret(Vec<u8>);

impl MasterSecret {
    pub fn new(bytes: Vec<u8>) -> Result<Self, KdfError> {
        let len = bytes.len();
        if !len.is_multiple_of(BLOCK_LEN) {
            return Err(KdfError::SecretNotAligned { len });
        }
        if len < 2 * BLOCK_LEN {
            return Err(KdfError::SecretTooShort { len });
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of blocks usable for session derivation (excludes the auth block).
    pub fn derivation_block_count(&self) -> usize {
        self.0.len() / BLOCK_LEN - 1
    }
}

impl Drop for MasterSecret {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterSecret({} bytes)", self.0.len())
    }
}

/// Lifecycle of a key block. Only moves forward: Fresh → Used → Retired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockState {
    Fresh,
    Used,
    Retired,
}

/// One 256-bit slice `M_i` of the master secret.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyBlock {
    index: u32,
    bytes: [u8; BLOCK_LEN],
    state: BlockState,
}

impl KeyBlock {
    pub fn new(index: u32, bytes: [u8; BLOCK_LEN], state: BlockState) -> Self {
        Self {
            index,
            bytes,
            state,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.bytes
    }

    pub fn state(&self) -> BlockState {
        self.state
    }

    pub fn is_auth(&self) -> bool {
        self.index == 0
    }

    /// Advances the state machine. Staying put or moving backwards is an error.
    pub fn transition(&mut self, to: BlockState) -> Result<(), KdfError> {
        let ok = matches!(
            (self.state, to),
            (BlockState::Fresh, BlockState::Used) | (BlockState::Used, BlockState::Retired)
        );
        if !ok {
            return Err(KdfError::InvalidTransition {
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }
}

impl Drop for KeyBlock {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl fmt::Debug for KeyBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyBlock")
            .field("index", &self.index)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

/// The partition of a master secret: the reserved auth block plus the
/// ordered derivation blocks `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyBlockSet {
    auth_block: KeyBlock,
    derivation_blocks: Vec<KeyBlock>,
}

impl KeyBlockSet {
    /// Reassembles a set from stored blocks. Indices must run 0..=n in order.
    pub(crate) fn from_blocks(mut blocks: Vec<KeyBlock>) -> Option<Self> {
        if blocks.len() < 2
            || blocks
                .iter()
                .enumerate()
                .any(|(i, b)| b.index as usize != i)
        {
            return None;
        }
        let derivation_blocks = blocks.split_off(1);
        let auth_block = blocks.pop()?;
        Some(Self {
            auth_block,
            derivation_blocks,
        })
    }

    pub fn auth_block(&self) -> &KeyBlock {
        &self.auth_block
    }

    pub fn derivation_blocks(&self) -> &[KeyBlock] {
        &self.derivation_blocks
    }

    /// Derivation block by its 1-based index. Index 0 is never returned here.
    pub fn get(&self, index: u32) -> Option<&KeyBlock> {
        let pos = (index as usize).checked_sub(1)?;
        self.derivation_blocks.get(pos)
    }

    pub(crate) fn get_mut(&mut self, index: u32) -> Option<&mut KeyBlock> {
        let pos = (index as usize).checked_sub(1)?;
        self.derivation_blocks.get_mut(pos)
    }

    /// All blocks in index order, auth block first.
    pub fn iter(&self) -> impl Iterator<Item = &KeyBlock> {
        std::iter::once(&self.auth_block).chain(self.derivation_blocks.iter())
    }

    pub fn count_in(&self, state: BlockState) -> usize {
        self.derivation_blocks
            .iter()
            .filter(|b| b.state == state)
            .count()
    }
}

/// Splits `secret` into 32-byte blocks. Block 0 becomes the auth block and
/// every derivation block starts out Fresh.
pub fn partition_master(secret: &MasterSecret) -> KeyBlockSet {
    let mut blocks = secret
        .as_bytes()
        .chunks_exact(BLOCK_LEN)
        .enumerate()
        .map(|(i, chunk)| {
            let mut bytes = [0u8; BLOCK_LEN];
            bytes.copy_from_slice(chunk);
            KeyBlock::new(i as u32, bytes, BlockState::Fresh)
        });
    // MasterSecret guarantees at least two aligned blocks.
    let auth_block = blocks.next().expect("validated master secret");
    KeyBlockSet {
        auth_block,
        derivation_blocks: blocks.collect(),
    }
}

/// Identifies the derivation function `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SuiteId {
    #[serde(rename = "AES_COMPOSE_V1")]
    AesComposeV1,
    #[serde(rename = "SHA3_DERIVE_V1")]
    Sha3DeriveV1,
}

impl SuiteId {
    pub const ALL: [SuiteId; 2] = [SuiteId::AesComposeV1, SuiteId::Sha3DeriveV1];

    pub fn name(self) -> &'static str {
        match self {
            SuiteId::AesComposeV1 => "AES_COMPOSE_V1",
            SuiteId::Sha3DeriveV1 => "SHA3_DERIVE_V1",
        }
    }
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SuiteId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuiteId::ALL
            .into_iter()
            .find(|suite| suite.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

/// A derived 256-bit session key `S_i` together with the inputs that produced it.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    pub bytes: [u8; BLOCK_LEN],
    pub suite_id: SuiteId,
    pub block_index: u32,
    pub pulse_index: u64,
    pub pulse_chain_hash: [u8; HASH_LEN],
}

impl SessionKey {
    /// First 8 hex characters of SHA3-256 over the key. Safe to display.
    pub fn fingerprint(&self) -> String {
        let digest = Sha3_256::digest(self.bytes);
        hex::encode(&digest[..4])
    }
}

impl Drop for SessionKey {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKey")
            .field("fingerprint", &self.fingerprint())
            .field("suite_id", &self.suite_id)
            .field("block_index", &self.block_index)
            .field("pulse_index", &self.pulse_index)
            .field("pulse_chain_hash", &hex::encode(self.pulse_chain_hash))
            .finish()
    }
}

fn check_inputs(block: &KeyBlock, pulse: &Pulse) -> Result<(), KdfError> {
    if block.state != BlockState::Fresh {
        return Err(KdfError::BlockNotFresh {
            index: block.index,
            state: block.state,
        });
    }
    if pulse.self_check().is_err() {
        return Err(KdfError::PulseIntegrity { index: pulse.index });
    }
    Ok(())
}

fn ctr_block(j: u8) -> [u8; AES_BLOCK_LEN] {
    let mut ctr = [0u8; AES_BLOCK_LEN];
    ctr[AES_BLOCK_LEN - 1] = j;
    ctr
}

/// `AES_COMPOSE_V1`.
///
/// The 512-bit pulse output `R1 || R2 || R3 || R4` is folded into
/// `A = R1 ^ R3` and `B = R2 ^ R4`. Each AES input mixes in the other fold
/// with its 64-bit halves swapped, so every pulse bit reaches both outputs:
///
/// ```text
/// C1 = AES256(M_i, A ^ swap(B) ^ ctr(1))
/// C2 = AES256(M_i, B ^ swap(A) ^ ctr(2))
/// S_i = C1 || C2
/// ```
///
/// `ctr(j)` is fifteen zero bytes followed by `j`. The two AES inputs can
/// never be equal: their XOR is `D ^ swap(D)` (equal 64-bit halves) against
/// the counter difference `ctr(1) ^ ctr(2)` (unequal halves).
pub fn derive_session_aes(block: &KeyBlock, pulse: &Pulse) -> Result<SessionKey, KdfError> {
    check_inputs(block, pulse)?;
    let cipher = Aes256::new(GenericArray::from_slice(&block.bytes));
    let r = &pulse.rand_out;
    let fold: [[u8; AES_BLOCK_LEN]; 2] = std::array::from_fn(|j| {
        std::array::from_fn(|k| r[j * AES_BLOCK_LEN + k] ^ r[(j + 2) * AES_BLOCK_LEN + k])
    });
    let mut bytes = [0u8; BLOCK_LEN];
    for (j, half) in bytes.chunks_exact_mut(AES_BLOCK_LEN).enumerate() {
        let own = &fold[j];
        let other = &fold[1 - j];
        let ctr = ctr_block(j as u8 + 1);
        for k in 0..AES_BLOCK_LEN {
            half[k] = own[k] ^ other[(k + AES_BLOCK_LEN / 2) % AES_BLOCK_LEN] ^ ctr[k];
        }
        cipher.encrypt_block(GenericArray::from_mut_slice(half));
    }
    Ok(SessionKey {
        bytes,
        suite_id: SuiteId::AesComposeV1,
        block_index: block.index,
        pulse_index: pulse.index,
        pulse_chain_hash: pulse.chain_hash,
    })
}

/// `SHA3_DERIVE_V1`: `SHA3-256("BKD-v1-derive" || M_i || be64(index) || rand_out)`.
pub fn derive_session_sha3(block: &KeyBlock, pulse: &Pulse) -> Result<SessionKey, KdfError> {
    check_inputs(block, pulse)?;
    let digest = Sha3_256::new()
        .chain_update(DERIVE_DOMAIN)
        .chain_update(block.bytes)
        .chain_update(pulse.index.to_be_bytes())
        .chain_update(pulse.rand_out)
        .finalize();
    Ok(SessionKey {
        bytes: digest.into(),
        suite_id: SuiteId::Sha3DeriveV1,
        block_index: block.index,
        pulse_index: pulse.index,
        pulse_chain_hash: pulse.chain_hash,
    })
}

pub fn derive_session(
    suite: SuiteId,
    block: &KeyBlock,
    pulse: &Pulse,
) -> Result<SessionKey, KdfError> {
    match suite {
        SuiteId::AesComposeV1 => derive_session_aes(block, pulse),
        SuiteId::Sha3DeriveV1 => derive_session_sha3(block, pulse),
    }
}

/// Prefix-keyed SHA3-256 tag over `transcript`, keyed by the auth block.
pub fn mac_compute(auth_key: &KeyBlock, transcript: &[u8]) -> Result<[u8; HASH_LEN], KdfError> {
    if !auth_key.is_auth() {
        return Err(KdfError::NotAuthBlock {
            index: auth_key.index,
        });
    }
    if transcript.is_empty() {
        return Err(KdfError::EmptyTranscript);
    }
    Ok(Sha3_256::new()
        .chain_update(MAC_DOMAIN)
        .chain_update(auth_key.bytes)
        .chain_update(transcript)
        .finalize()
        .into())
}

/// Recomputes the tag and compares it in constant time.
pub fn mac_verify(auth_key: &KeyBlock, transcript: &[u8], tag: &[u8]) -> Result<bool, KdfError> {
    if tag.len() != HASH_LEN {
        return Err(KdfError::BadTagLength { len: tag.len() });
    }
    let expected = mac_compute(auth_key, transcript)?;
    Ok(expected.ct_eq(tag).into())
}
