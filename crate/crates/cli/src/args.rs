use std::net::SocketAddr;
use std::path::PathBuf;

use bkd_core::{SuiteId, DEFAULT_MIN_AGE, DEFAULT_REKEY_THRESHOLD};
use clap::{Args, Parser, Subcommand};

/// Beacon key distribution: session keys grown from a pre-shared secret and
/// public randomness-beacon pulses.
#[derive(Debug, Parser)]
#[command(name = "bkd", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Key ledger file
    #[arg(
        long,
        env = "BKD_LEDGER",
        global = true,
        default_value = "bkd-ledger.json"
    )]
    pub ledger: PathBuf,

    /// Beacon: an http(s):// endpoint or an exported JSON-lines chain file
    #[arg(long, global = true)]
    pub beacon: Option<String>,

    /// Minimum age, in pulses, of the pulse a proposal may use
    #[arg(long, global = true, default_value_t = DEFAULT_MIN_AGE,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub min_age: u64,

    /// Derivation suite (AES_COMPOSE_V1 or SHA3_DERIVE_V1)
    #[arg(long, global = true, default_value_t = SuiteId::AesComposeV1)]
    pub suite: SuiteId,

    /// Fresh-block count at or below which status reports RekeySoon
    #[arg(long, global = true, default_value_t = DEFAULT_REKEY_THRESHOLD as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub rekey_threshold: u64,

    /// Print session-key bytes (hex) in addition to the fingerprint
    #[arg(long, global = true)]
    pub reveal: bool,

    /// Seed all randomness deterministically (requires --insecure-test)
    #[arg(long, global = true, value_name = "SEED")]
    pub rng_seed: Option<u64>,

    /// Acknowledge that seeded randomness is for testing only
    #[arg(long, global = true)]
    pub insecure_test: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition a pre-shared secret into a new key ledger
    Init(InitArgs),
    /// Run a beacon HTTP service
    BeaconServe(ServeArgs),
    /// Write a beacon chain to a JSON-lines file
    BeaconExport(ExportArgs),
    /// Check the hash chain of a beacon
    VerifyChain,
    /// Derive a session key and write the proposal for the peers
    Propose(ProposeArgs),
    /// Verify a peer's proposal and derive the same session key
    Accept(AcceptArgs),
    /// Show key-block counts and whether the group must rekey
    Status,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["secret_hex", "generate"])))]
pub struct InitArgs {
    /// Group identifier bound into every proposal
    #[arg(long)]
    pub group: String,

    /// File holding the pre-shared secret as hex
    #[arg(long, value_name = "FILE")]
    pub secret_hex: Option<PathBuf>,

    /// Generate a secret of N bytes from local entropy (N a multiple of 32, at least 64)
    #[arg(long, value_name = "N")]
    pub generate: Option<usize>,

    /// With --generate, also write the secret as hex here for sharing with peers
    #[arg(long, value_name = "FILE", requires = "generate")]
    pub secret_out: Option<PathBuf>,

    /// Overwrite an existing ledger
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,

    /// Milliseconds between pulses; 0 disables the appender
    #[arg(long, default_value_t = 1000)]
    pub interval_ms: u64,

    /// Chain file loaded at start-up (if present) and written on shutdown
    #[arg(long, value_name = "FILE")]
    pub chain_file: Option<PathBuf>,

    /// Pulses to append immediately at start-up
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub pregenerate: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Destination file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Generate a fresh local chain of N pulses instead of reading --beacon
    #[arg(long, value_name = "N")]
    pub generate: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    /// Where to write the proposal JSON
    #[arg(long, value_name = "FILE", default_value = "proposal.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    /// Proposal JSON received from a peer
    #[arg(long, value_name = "FILE", default_value = "proposal.json")]
    pub proposal: PathBuf,
}
