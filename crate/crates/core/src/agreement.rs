//! One-message session agreement.
//!
//! The proposer picks the lowest Fresh key block and a pulse drawn at random
//! from the historical record, derives the session key, and sends a
//! [`SessionProposal`] tagged under the group's auth block. Every acceptor
//! holding the same master secret and the same pulse history re-derives the
//! identical key. Each key block is spent at most once per ledger.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beacon::{select_historical, BeaconError, PulseStore};
use crate::kdf::{
    derive_session, mac_compute, mac_verify, BlockState, KdfError, SessionKey, SuiteId, HASH_LEN,
};
use crate::ledger::{Ledger, LedgerError};

pub const PROPOSAL_PROTO: &str = "bkd-agree-1";
pub const NONCE_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("GroupMismatch: proposal for group {got:?}, local group is {expected:?}")]
    GroupMismatch { expected: String, got: String },
    #[error("BadMac: proposal tag does not verify")]
    BadMac,
    #[error("ReplayedBlock: key block {0} was already consumed")]
    ReplayedBlock(u32),
    #[error("UnknownPulse: pulse {0} is not in the local record")]
    UnknownPulse(u64),
    #[error("PulseBindingMismatch: local pulse {0} does not hash to the proposal's chain hash")]
    PulseBindingMismatch(u64),
    #[error("unsupported protocol {0:?}")]
    UnsupportedProto(String),
    #[error("BadGroupId: group id may not contain '|'")]
    BadGroupId,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Beacon(#[from] BeaconError),
    #[error(transparent)]
    Kdf(#[from] KdfError),
}

/// The authenticated proposal message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SessionProposal {
    pub proto: String,
    pub group_id: String,
    pub suite_id: SuiteId,
    pub block_index: u32,
    pub pulse_index: u64,
    #[serde(with = "crate::hexbytes")]
    pub pulse_chain_hash: [u8; HASH_LEN],
    #[serde(with = "crate::hexbytes")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "crate::hexbytes")]
    pub tag: [u8; HASH_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementOutcome {
    pub session_key: SessionKey,
    pub proposal: SessionProposal,
}

/// `bkd-agree-1|group|suite|block|pulse|hex chain hash|hex nonce`. The tag
/// field is not covered.
pub fn transcript_canonical(proposal: &SessionProposal) -> Result<Vec<u8>, AgreementError> {
    if proposal.proto != PROPOSAL_PROTO {
        return Err(AgreementError::UnsupportedProto(proposal.proto.clone()));
    }
    if proposal.group_id.contains('|') {
        return Err(AgreementError::BadGroupId);
    }
    Ok(format!(
        "{}|{}|{}|{}|{}|{}|{}",
        PROPOSAL_PROTO,
        proposal.group_id,
        proposal.suite_id.name(),
        proposal.block_index,
        proposal.pulse_index,
        hex::encode(proposal.pulse_chain_hash),
        hex::encode(proposal.nonce)
    )
    .into_bytes())
}

/// Proposer side. On success the chosen block is marked Used in `ledger`;
/// on any error `ledger` is untouched.
pub fn propose_session<R: RngCore + ?Sized>(
    ledger: &mut Ledger,
    store: &PulseStore,
    rng: &mut R,
    suite: SuiteId,
    min_age: u64,
) -> Result<AgreementOutcome, AgreementError> {
    let block_index = ledger.next_fresh()?;
    let pulse = select_historical(store, rng, min_age)?;
    let session_key = derive_session(suite, ledger.block(block_index)?, &pulse)?;

    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|e| BeaconError::EntropyUnavailable(e.to_string()))?;
    let mut proposal = SessionProposal {
        proto: PROPOSAL_PROTO.to_owned(),
        group_id: ledger.group_id().to_owned(),
        suite_id: suite,
        block_index,
        pulse_index: pulse.index,
        pulse_chain_hash: pulse.chain_hash,
        nonce,
        tag: [0u8; HASH_LEN],
    };
    proposal.tag = mac_compute(ledger.auth_block(), &transcript_canonical(&proposal)?)?;

    ledger.consume(&session_key)?;
    Ok(AgreementOutcome {
        session_key,
        proposal,
    })
}

/// Acceptor side.
///
/// The tag is checked first, over the proposal exactly as received, so any
/// altered covered field is reported as `BadMac`. Then the group, the block
/// (must be Fresh locally) and the pulse binding are checked. `ledger` is
/// only modified once every check has passed.
pub fn accept_session(
    ledger: &mut Ledger,
    store: &PulseStore,
    proposal: &SessionProposal,
) -> Result<AgreementOutcome, AgreementError> {
    let transcript = transcript_canonical(proposal).map_err(|_| AgreementError::BadMac)?;
    if !mac_verify(ledger.auth_block(), &transcript, &proposal.tag)? {
        return Err(AgreementError::BadMac);
    }
    if proposal.group_id != ledger.group_id() {
        return Err(AgreementError::GroupMismatch {
            expected: ledger.group_id().to_owned(),
            got: proposal.group_id.clone(),
        });
    }

    let block = ledger.block(proposal.block_index)?;
    if block.state() != BlockState::Fresh {
        return Err(AgreementError::ReplayedBlock(proposal.block_index));
    }
    let pulse = store
        .get(proposal.pulse_index)
        .ok_or(AgreementError::UnknownPulse(proposal.pulse_index))?;
    let local_hash = pulse.recompute_chain_hash().ok();
    if local_hash != Some(proposal.pulse_chain_hash)
        || pulse.chain_hash != proposal.pulse_chain_hash
    {
        return Err(AgreementError::PulseBindingMismatch(proposal.pulse_index));
    }

    let session_key = derive_session(proposal.suite_id, block, &pulse)?;
    ledger.consume(&session_key)?;
    Ok(AgreementOutcome {
        session_key,
        proposal: proposal.clone(),
    })
}

/// Per-member results of a group acceptance, in member order.
#[derive(Debug)]
pub struct GroupReport {
    pub results: Vec<Result<AgreementOutcome, AgreementError>>,
}

impl GroupReport {
    pub fn succeeded(&self) -> usize {
        self.results.iter().filter(|r| r.is_ok()).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &AgreementError)> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }

    /// The shared key, if every member accepted and all keys are bit-identical.
    pub fn consensus_key(&self) -> Option<&SessionKey> {
        let mut keys = self
            .results
            .iter()
            .map(|r| r.as_ref().ok().map(|o| &o.session_key));
        let first = keys.next()??;
        keys.all(|k| k.is_some_and(|k| k.bytes == first.bytes))
            .then_some(first)
    }
}

/// Runs [`accept_session`] for every (ledger, pulse store) member. A failure
/// for one member does not stop the others.
pub fn group_accept<'a, I>(members: I, proposal: &SessionProposal) -> GroupReport
where
    I: IntoIterator<Item = (&'a mut Ledger, &'a PulseStore)>,
{
    let results = members
        .into_iter()
        .map(|(ledger, store)| accept_session(ledger, store, proposal))
        .collect();
    GroupReport { results }
}
