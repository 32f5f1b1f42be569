//! Beacon key distribution (BKD).
//!
//! Parties holding the same pre-shared master secret grow a stream of 256-bit
//! session keys by combining one fixed-size block of that secret with one
//! publicly broadcast randomness-beacon pulse: `S_i = F(M_i, P_i)`.
//!
//! The crate is split along the lifecycle of a session key:
//!
//! * [`kdf`] partitions the master secret and implements the two derivation
//!   suites plus the proposal MAC.
//! * [`beacon`] produces, stores, serves and verifies hash-chained pulses.
//! * [`ledger`] tracks which key blocks have been consumed and persists that
//!   state under an integrity tag.
//! * [`agreement`] is the one-message propose/accept protocol, pairwise or
//!   for a whole group.

pub mod agreement;
pub mod beacon;
mod hexbytes;
pub mod kdf;
pub mod ledger;

pub use agreement::{
    accept_session, group_accept, propose_session, transcript_canonical, AgreementError,
    AgreementOutcome, GroupReport, SessionProposal, PROPOSAL_PROTO,
};
pub use beacon::{
    canonical_serialize, chain_hash, genesis_pulse, next_pulse, select_historical, verify_chain,
    BeaconClient, BeaconError, ChainFailure, ChainVerdict, Pulse, PulseStore, DEFAULT_MIN_AGE,
    PULSE_VERSION,
};
pub use kdf::{
    derive_session, derive_session_aes, derive_session_sha3, mac_compute, mac_verify,
    partition_master, BlockState, KdfError, KeyBlock, KeyBlockSet, MasterSecret, SessionKey,
    SuiteId, BLOCK_LEN, HASH_LEN, RAND_OUT_LEN,
};
pub use ledger::{
    load_ledger, peek_auth_block, save_ledger, validate_group_id, Ledger, LedgerError,
    RotationStatus, RotationVerdict, UsageEntry, DEFAULT_REKEY_THRESHOLD,
};
