//! Hash-chained randomness beacon.
//!
//! Every pulse commits to its predecessor through `prev_hash`, and to its own
//! content through `chain_hash = SHA3-256(canonical_serialize(pulse))`. A
//! client holding any suffix of the chain can therefore detect rewritten
//! history by recomputation alone.

mod http;
mod store;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use thiserror::Error;

use crate::kdf::{HASH_LEN, RAND_OUT_LEN};

pub use http::{fetch_pulse, router, serve, spawn_appender, BeaconClient};
pub use store::{read_jsonl, select_historical, write_jsonl, PulseStore};

/// Wire and hashing version tag carried by every pulse.
pub const PULSE_VERSION: &str = "bkd-1";

/// Default number of newest pulses excluded from historical selection.
pub const DEFAULT_MIN_AGE: u64 = 10;

#[derive(Debug, Error)]
pub enum BeaconError {
    #[error("FieldOutOfRange: {0}")]
    FieldOutOfRange(String),
    #[error("EntropyUnavailable: {0}")]
    EntropyUnavailable(String),
    #[error("TimestampRegression: {got} is earlier than predecessor timestamp {prev}")]
    TimestampRegression { prev: u64, got: u64 },
    #[error("PulseIntegrity: pulse {index} fails chain-hash recomputation")]
    PulseIntegrity { index: u64 },
    #[error("EmptyChain")]
    EmptyChain,
    #[error("HistoryTooShort: latest index {latest:?} leaves nothing older than {min_age} pulses")]
    HistoryTooShort { latest: Option<u64>, min_age: u64 },
    #[error("min_age must be at least 1")]
    BadMinAge,
    #[error("NotFound: pulse {0}")]
    NotFound(u64),
    #[error("Unreachable: {0}")]
    Unreachable(String),
    #[error("append rejected at index {index}: {reason}")]
    AppendRejected { index: u64, reason: ChainFailure },
    #[error("chain rejected: {0}")]
    InvalidChain(ChainVerdict),
    #[error("malformed pulse data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One beacon broadcast `P_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Pulse {
    pub version: String,
    pub index: u64,
    pub timestamp: u64,
    #[serde(with = "crate::hexbytes")]
    pub rand_out: [u8; RAND_OUT_LEN],
    #[serde(with = "crate::hexbytes")]
    pub prev_hash: [u8; HASH_LEN],
    #[serde(with = "crate::hexbytes")]
    pub chain_hash: [u8; HASH_LEN],
}

impl Pulse {
    pub fn recompute_chain_hash(&self) -> Result<[u8; HASH_LEN], BeaconError> {
        chain_hash(self)
    }

    /// Checks that `chain_hash` matches the other fields.
    pub fn self_check(&self) -> Result<(), BeaconError> {
        match self.recompute_chain_hash() {
            Ok(h) if h == self.chain_hash => Ok(()),
            _ => Err(BeaconError::PulseIntegrity { index: self.index }),
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.index == 0
    }
}

/// The hashing preimage of a pulse:
/// `bkd-1|<index>|<timestamp>|<hex rand_out>|<hex prev_hash>`.
///
/// `chain_hash` is not part of the preimage.
pub fn canonical_serialize(pulse: &Pulse) -> Result<Vec<u8>, BeaconError> {
    if pulse.version != PULSE_VERSION {
        return Err(BeaconError::FieldOutOfRange(format!(
            "version {:?}, expected {PULSE_VERSION:?}",
            pulse.version
        )));
    }
    Ok(format!(
        "{}|{}|{}|{}|{}",
        PULSE_VERSION,
        pulse.index,
        pulse.timestamp,
        hex::encode(pulse.rand_out),
        hex::encode(pulse.prev_hash)
    )
    .into_bytes())
}

pub fn chain_hash(pulse: &Pulse) -> Result<[u8; HASH_LEN], BeaconError> {
    Ok(Sha3_256::digest(canonical_serialize(pulse)?).into())
}

fn seal(mut pulse: Pulse) -> Pulse {
    pulse.chain_hash = chain_hash(&pulse).expect("version is the crate constant");
    pulse
}

fn draw<R: RngCore + ?Sized>(rng: &mut R) -> Result<[u8; RAND_OUT_LEN], BeaconError> {
    let mut rand_out = [0u8; RAND_OUT_LEN];
    rng.try_fill_bytes(&mut rand_out)
        .map_err(|e| BeaconError::EntropyUnavailable(e.to_string()))?;
    Ok(rand_out)
}

/// Genesis pulse with caller-supplied random output.
pub fn genesis_pulse_with(rand_out: [u8; RAND_OUT_LEN], timestamp: u64) -> Pulse {
    seal(Pulse {
        version: PULSE_VERSION.to_owned(),
        index: 0,
        timestamp,
        rand_out,
        prev_hash: [0u8; HASH_LEN],
        chain_hash: [0u8; HASH_LEN],
    })
}

pub fn genesis_pulse<R: RngCore + ?Sized>(
    rng: &mut R,
    timestamp: u64,
) -> Result<Pulse, BeaconError> {
    Ok(genesis_pulse_with(draw(rng)?, timestamp))
}

/// Successor of `prev` with caller-supplied random output.
pub fn next_pulse_with(
    prev: &Pulse,
    rand_out: [u8; RAND_OUT_LEN],
    timestamp: u64,
) -> Result<Pulse, BeaconError> {
    prev.self_check()?;
    if timestamp < prev.timestamp {
        return Err(BeaconError::TimestampRegression {
            prev: prev.timestamp,
            got: timestamp,
        });
    }
    let index = prev
        .index
        .checked_add(1)
        .ok_or_else(|| BeaconError::FieldOutOfRange("pulse index overflow".into()))?;
    Ok(seal(Pulse {
        version: PULSE_VERSION.to_owned(),
        index,
        timestamp,
        rand_out,
        prev_hash: prev.recompute_chain_hash()?,
        chain_hash: [0u8; HASH_LEN],
    }))
}

pub fn next_pulse<R: RngCore + ?Sized>(
    prev: &Pulse,
    rng: &mut R,
    timestamp: u64,
) -> Result<Pulse, BeaconError> {
    // Validate before consuming entropy.
    prev.self_check()?;
    if timestamp < prev.timestamp {
        return Err(BeaconError::TimestampRegression {
            prev: prev.timestamp,
            got: timestamp,
        });
    }
    next_pulse_with(prev, draw(rng)?, timestamp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainFailure {
    PrevHashMismatch,
    ChainHashMismatch,
    IndexGap,
    TimestampNonMonotone,
}

impl fmt::Display for ChainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Result of [`verify_chain`]. `ok()` holds iff no failing index was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainVerdict {
    failure: Option<(u64, ChainFailure)>,
}

impl ChainVerdict {
    pub const OK: ChainVerdict = ChainVerdict { failure: None };

    pub fn failed(index: u64, reason: ChainFailure) -> Self {
        Self {
            failure: Some((index, reason)),
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn first_bad_index(&self) -> Option<u64> {
        self.failure.map(|(i, _)| i)
    }

    pub fn reason(&self) -> Option<ChainFailure> {
        self.failure.map(|(_, r)| r)
    }
}

impl fmt::Display for ChainVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.failure {
            None => f.write_str("ok"),
            Some((i, reason)) => write!(f, "{reason} at index {i}"),
        }
    }
}

/// Checks linkage between `prev` (already self-consistent) and `next`.
/// Returns the failure to report against `next`, if any.
pub(crate) fn link_failure(
    prev: Option<&Pulse>,
    next: &Pulse,
    expected_index: u64,
) -> Option<ChainFailure> {
    if next.index != expected_index {
        return Some(ChainFailure::IndexGap);
    }
    match prev {
        None if next.is_genesis() && next.prev_hash != [0u8; HASH_LEN] => {
            Some(ChainFailure::PrevHashMismatch)
        }
        None => None,
        Some(p) if next.prev_hash != p.chain_hash => Some(ChainFailure::PrevHashMismatch),
        Some(p) if next.timestamp < p.timestamp => Some(ChainFailure::TimestampNonMonotone),
        Some(_) => None,
    }
}

/// Verifies a contiguous run of pulses.
///
/// Each position is checked in order: self-consistent `chain_hash`, index
/// contiguity, `prev_hash` linkage, then timestamp order. A pulse that fails
/// its own hash is reported at the index its position implies; one that is
/// self-consistent but out of place is reported at the index it claims.
pub fn verify_chain(pulses: &[Pulse]) -> Result<ChainVerdict, BeaconError> {
    let first = pulses.first().ok_or(BeaconError::EmptyChain)?;
    // A corrupted first pulse cannot be trusted for its own index; fall back
    // to its intact successor.
    let base = match pulses.get(1) {
        Some(second) if first.self_check().is_err() && second.self_check().is_ok() => {
            second.index.saturating_sub(1)
        }
        _ => first.index,
    };
    let mut prev: Option<&Pulse> = None;
    for (pos, pulse) in pulses.iter().enumerate() {
        let expected = base.saturating_add(pos as u64);
        if pulse.self_check().is_err() {
            return Ok(ChainVerdict::failed(
                expected,
                ChainFailure::ChainHashMismatch,
            ));
        }
        if let Some(reason) = link_failure(prev, pulse, expected) {
            return Ok(ChainVerdict::failed(pulse.index, reason));
        }
        prev = Some(pulse);
    }
    Ok(ChainVerdict::OK)
}
