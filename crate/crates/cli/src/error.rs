use std::path::PathBuf;

use bkd_core::{AgreementError, BeaconError, ChainVerdict, KdfError, LedgerError};
use thiserror::Error;

/// Everything a command can fail with. Each variant maps to a stable exit
/// code via [`CliError::exit_code`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("--rng-seed is for testing only and requires --insecure-test")]
    InsecureFlagRefused,
    #[error("BadSecretInput: {0}")]
    BadSecretInput(String),
    #[error("ledger {0} does not exist; run `bkd init` first")]
    LedgerMissing(PathBuf),
    #[error("ledger {0} already exists; pass --force to overwrite")]
    LedgerExists(PathBuf),
    #[error("no beacon given; pass --beacon with an endpoint or chain file")]
    NoBeacon,
    #[error("ChainInvalid: {0}")]
    ChainInvalid(ChainVerdict),
    /// A proposal that does not even parse is treated like any other
    /// unauthentic message.
    #[error("BadMac: proposal cannot be parsed: {0}")]
    UnparseableProposal(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kdf(#[from] KdfError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Beacon(#[from] BeaconError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 10,
            CliError::InsecureFlagRefused => 50,
            CliError::BadSecretInput(_) => 14,
            CliError::LedgerMissing(_) => 23,
            CliError::LedgerExists(_) => 24,
            CliError::NoBeacon => 35,
            CliError::ChainInvalid(_) => 30,
            CliError::UnparseableProposal(_) => 41,
            CliError::Bind { .. } => 36,
            CliError::Kdf(e) => kdf_code(e),
            CliError::Ledger(e) => ledger_code(e),
            CliError::Beacon(e) => beacon_code(e),
            CliError::Agreement(e) => agreement_code(e),
        }
    }
}

fn kdf_code(e: &KdfError) -> i32 {
    match e {
        KdfError::SecretTooShort { .. } => 11,
        KdfError::SecretNotAligned { .. } => 12,
        KdfError::BlockNotFresh { .. } => 42,
        KdfError::PulseIntegrity { .. } => 33,
        _ => 19,
    }
}

fn ledger_code(e: &LedgerError) -> i32 {
    match e {
        LedgerError::Kdf(e) => kdf_code(e),
        LedgerError::BadGroupId(_) => 13,
        LedgerError::IntegrityFailure => 20,
        LedgerError::UnsupportedVersion(_) => 21,
        LedgerError::MalformedDocument(_) => 22,
        LedgerError::Exhausted => 45,
        LedgerError::BlockNotFresh { .. } => 42,
        LedgerError::UnknownBlock(_) | LedgerError::AuthBlockForbidden => 47,
        LedgerError::BadThreshold => 2,
    }
}

fn beacon_code(e: &BeaconError) -> i32 {
    match e {
        BeaconError::InvalidChain(_) | BeaconError::AppendRejected { .. } => 30,
        BeaconError::NotFound(_) => 31,
        BeaconError::Unreachable(_) => 32,
        BeaconError::PulseIntegrity { .. } => 33,
        BeaconError::HistoryTooShort { .. } => 34,
        BeaconError::EmptyChain => 37,
        BeaconError::Malformed(_) => 38,
        BeaconError::Io(_) => 10,
        _ => 39,
    }
}

fn agreement_code(e: &AgreementError) -> i32 {
    match e {
        AgreementError::GroupMismatch { .. } => 40,
        AgreementError::BadMac => 41,
        AgreementError::ReplayedBlock(_) => 42,
        AgreementError::UnknownPulse(_) => 43,
        AgreementError::PulseBindingMismatch(_) => 44,
        AgreementError::UnsupportedProto(_) => 46,
        AgreementError::BadGroupId => 13,
        AgreementError::Ledger(e) => ledger_code(e),
        AgreementError::Beacon(e) => beacon_code(e),
        AgreementError::Kdf(e) => kdf_code(e),
    }
}
