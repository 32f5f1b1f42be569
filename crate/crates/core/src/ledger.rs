//! Key-block lifecycle: single-use enforcement, rekey alarms, and the
//! integrity-tagged ledger file.
//!
//! File layout: a JSON document, a newline, then `tag=<64 hex>` where the tag
//! is [`mac_compute`] over the document bytes under the auth block. The tag is
//! checked before the document is parsed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexbytes;
use crate::kdf::{
    mac_compute, mac_verify, partition_master, BlockState, KdfError, KeyBlock, KeyBlockSet,
    MasterSecret, SessionKey, SuiteId, HASH_LEN,
};

pub const LEDGER_VERSION: &str = "bkd-ledger-1";
pub const DEFAULT_REKEY_THRESHOLD: usize = 2;
pub const MAX_GROUP_ID_LEN: usize = 64;

const TAG_PREFIX: &[u8] = b"tag=";
const TAG_LINE_LEN: usize = TAG_PREFIX.len() + 2 * HASH_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error(transparent)]
    Kdf(#[from] KdfError),
    #[error("BadGroupId: {0}")]
    BadGroupId(String),
    #[error("Exhausted: no fresh key blocks remain; import a new pre-shared secret")]
    Exhausted,
    #[error("BlockNotFresh: key block {index} is {state:?}")]
    BlockNotFresh { index: u32, state: BlockState },
    #[error("UnknownBlock: no derivation block {0}")]
    UnknownBlock(u32),
    #[error("AuthBlockForbidden: block 0 is reserved for authentication")]
    AuthBlockForbidden,
    #[error("BadThreshold: rekey threshold must be at least 1")]
    BadThreshold,
    #[error("IntegrityFailure: ledger tag does not verify")]
    IntegrityFailure,
    #[error("UnsupportedVersion: {0:?}")]
    UnsupportedVersion(String),
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
}

/// Checks the group identifier: 1..=64 printable ASCII characters, no `|`.
pub fn validate_group_id(group_id: &str) -> Result<(), LedgerError> {
    if group_id.is_empty() {
        return Err(LedgerError::BadGroupId("empty".into()));
    }
    if group_id.len() > MAX_GROUP_ID_LEN {
        return Err(LedgerError::BadGroupId(format!(
            "longer than {MAX_GROUP_ID_LEN} characters"
        )));
    }
    if let Some(c) = group_id
        .chars()
        .find(|&c| !(' '..='~').contains(&c) || c == '|')
    {
        return Err(LedgerError::BadGroupId(format!("invalid character {c:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageEntry {
    pub block_index: u32,
    pub pulse_index: u64,
    pub pulse_chain_hash: [u8; HASH_LEN],
    pub suite_id: SuiteId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationVerdict {
    Healthy,
    RekeySoon,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotationStatus {
    pub fresh_remaining: usize,
    pub threshold: usize,
    pub verdict: RotationVerdict,
}

/// Per-group record of which key blocks have been spent, and on what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    group_id: String,
    blocks: KeyBlockSet,
    usage_log: Vec<UsageEntry>,
}

impl Ledger {
    pub fn init(secret: &MasterSecret, group_id: &str) -> Result<Self, LedgerError> {
        validate_group_id(group_id)?;
        Ok(Self {
            group_id: group_id.to_owned(),
            blocks: partition_master(secret),
            usage_log: Vec::new(),
        })
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn blocks(&self) -> &KeyBlockSet {
        &self.blocks
    }

    pub fn auth_block(&self) -> &KeyBlock {
        self.blocks.auth_block()
    }

    pub fn usage_log(&self) -> &[UsageEntry] {
        &self.usage_log
    }

    /// Derivation block `index`; block 0 and out-of-range indices are errors.
    pub fn block(&self, index: u32) -> Result<&KeyBlock, LedgerError> {
        if index == 0 {
            return Err(LedgerError::AuthBlockForbidden);
        }
        self.blocks
            .get(index)
            .ok_or(LedgerError::UnknownBlock(index))
    }

    pub fn fresh_remaining(&self) -> usize {
        self.blocks.count_in(BlockState::Fresh)
    }

    /// Lowest-index Fresh derivation block.
    pub fn next_fresh(&self) -> Result<u32, LedgerError> {
        self.blocks
            .derivation_blocks()
            .iter()
            .find(|b| b.state() == BlockState::Fresh)
            .map(KeyBlock::index)
            .ok_or(LedgerError::Exhausted)
    }

    pub fn mark_used(
        &mut self,
        block_index: u32,
        pulse_index: u64,
        pulse_chain_hash: [u8; HASH_LEN],
        suite_id: SuiteId,
    ) -> Result<(), LedgerError> {
        if block_index == 0 {
            return Err(LedgerError::AuthBlockForbidden);
        }
        let block = self
            .blocks
            .get_mut(block_index)
            .ok_or(LedgerError::UnknownBlock(block_index))?;
        if block.state() != BlockState::Fresh {
            return Err(LedgerError::BlockNotFresh {
                index: block_index,
                state: block.state(),
            });
        }
        block.transition(BlockState::Used)?;
        self.usage_log.push(UsageEntry {
            block_index,
            pulse_index,
            pulse_chain_hash,
            suite_id,
        });
        Ok(())
    }

    /// Records consumption of the block behind `key`.
    pub fn consume(&mut self, key: &SessionKey) -> Result<(), LedgerError> {
        self.mark_used(
            key.block_index,
            key.pulse_index,
            key.pulse_chain_hash,
            key.suite_id,
        )
    }

    /// Marks a Used block as Retired once its session is over.
    pub fn retire(&mut self, block_index: u32) -> Result<(), LedgerError> {
        if block_index == 0 {
            return Err(LedgerError::AuthBlockForbidden);
        }
        let block = self
            .blocks
            .get_mut(block_index)
            .ok_or(LedgerError::UnknownBlock(block_index))?;
        block.transition(BlockState::Retired)?;
        Ok(())
    }

    pub fn rotation_status(&self, threshold: usize) -> Result<RotationStatus, LedgerError> {
        if threshold == 0 {
            return Err(LedgerError::BadThreshold);
        }
        let fresh_remaining = self.fresh_remaining();
        let verdict = match fresh_remaining {
            0 => RotationVerdict::Exhausted,
            n if n <= threshold => RotationVerdict::RekeySoon,
            _ => RotationVerdict::Healthy,
        };
        Ok(RotationStatus {
            fresh_remaining,
            threshold,
            verdict,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LedgerDoc {
    version: String,
    group_id: String,
    blocks: Vec<BlockDoc>,
    usage_log: Vec<UsageDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct BlockDoc {
    index: u32,
    state: BlockState,
    #[serde(with = "hexbytes")]
    hex_bytes: [u8; 32],
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct UsageDoc {
    block_index: u32,
    pulse_index: u64,
    #[serde(with = "hexbytes")]
    pulse_chain_hash: [u8; HASH_LEN],
    suite_id: SuiteId,
}

impl LedgerDoc {
    fn from_ledger(ledger: &Ledger) -> Self {
        Self {
            version: LEDGER_VERSION.to_owned(),
            group_id: ledger.group_id.clone(),
            blocks: ledger
                .blocks
                .iter()
                .map(|b| BlockDoc {
                    index: b.index(),
                    state: b.state(),
                    hex_bytes: *b.bytes(),
                })
                .collect(),
            usage_log: ledger
                .usage_log
                .iter()
                .map(|u| UsageDoc {
                    block_index: u.block_index,
                    pulse_index: u.pulse_index,
                    pulse_chain_hash: u.pulse_chain_hash,
                    suite_id: u.suite_id,
                })
                .collect(),
        }
    }

    fn into_ledger(self) -> Result<Ledger, LedgerError> {
        let malformed = |m: &str| LedgerError::MalformedDocument(m.to_owned());
        validate_group_id(&self.group_id)?;
        let blocks = self
            .blocks
            .into_iter()
            .map(|b| KeyBlock::new(b.index, b.hex_bytes, b.state))
            .collect();
        let blocks = KeyBlockSet::from_blocks(blocks)
            .ok_or_else(|| malformed("blocks must be indexed 0..=n with n >= 1"))?;
        if blocks.auth_block().state() != BlockState::Fresh {
            return Err(malformed("auth block must stay Fresh"));
        }

        let mut seen = vec![false; blocks.derivation_blocks().len() + 1];
        let usage_log = self
            .usage_log
            .into_iter()
            .map(|u| {
                let block = blocks
                    .get(u.block_index)
                    .ok_or_else(|| malformed("usage entry for unknown block"))?;
                if block.state() == BlockState::Fresh {
                    return Err(malformed("usage entry for a Fresh block"));
                }
                if std::mem::replace(&mut seen[u.block_index as usize], true) {
                    return Err(malformed("block appears twice in usage log"));
                }
                Ok(UsageEntry {
                    block_index: u.block_index,
                    pulse_index: u.pulse_index,
                    pulse_chain_hash: u.pulse_chain_hash,
                    suite_id: u.suite_id,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if blocks
            .derivation_blocks()
            .iter()
            .any(|b| b.state() != BlockState::Fresh && !seen[b.index() as usize])
        {
            return Err(malformed("spent block missing from usage log"));
        }
        Ok(Ledger {
            group_id: self.group_id,
            blocks,
            usage_log,
        })
    }
}

/// Serializes `ledger` and appends the integrity tag.
pub fn save_ledger(ledger: &Ledger, auth_key: &KeyBlock) -> Result<Vec<u8>, LedgerError> {
    let mut out = serde_json::to_vec_pretty(&LedgerDoc::from_ledger(ledger))
        .map_err(|e| LedgerError::MalformedDocument(e.to_string()))?;
    let tag = mac_compute(auth_key, &out)?;
    out.push(b'\n');
    out.extend_from_slice(TAG_PREFIX);
    out.extend_from_slice(hex::encode(tag).as_bytes());
    out.push(b'\n');
    Ok(out)
}

/// Splits a saved file into (document, tag). Any damage to the trailer
/// counts as an integrity failure.
fn split_tagged(bytes: &[u8]) -> Result<(&[u8], [u8; HASH_LEN]), LedgerError> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.len() < TAG_LINE_LEN + 2 {
        return Err(LedgerError::MalformedDocument("file too short".into()));
    }
    let (rest, tag_line) = body.split_at(body.len() - TAG_LINE_LEN);
    let doc = rest
        .strip_suffix(b"\n")
        .ok_or(LedgerError::IntegrityFailure)?;
    let hex_tag = tag_line
        .strip_prefix(TAG_PREFIX)
        .ok_or(LedgerError::IntegrityFailure)?;
    let hex_tag = std::str::from_utf8(hex_tag).map_err(|_| LedgerError::IntegrityFailure)?;
    let tag = hexbytes::decode_lower(hex_tag).ok_or(LedgerError::IntegrityFailure)?;
    Ok((doc, tag))
}

/// Verifies the tag under `auth_key`, then parses and validates the document.
pub fn load_ledger(bytes: &[u8], auth_key: &KeyBlock) -> Result<Ledger, LedgerError> {
    let (doc, tag) = split_tagged(bytes)?;
    if !mac_verify(auth_key, doc, &tag)? {
        return Err(LedgerError::IntegrityFailure);
    }
    let value: serde_json::Value =
        serde_json::from_slice(doc).map_err(|e| LedgerError::MalformedDocument(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(LEDGER_VERSION) => {}
        Some(other) => return Err(LedgerError::UnsupportedVersion(other.to_owned())),
        None => return Err(LedgerError::MalformedDocument("missing version".into())),
    }
    let doc: LedgerDoc =
        serde_json::from_value(value).map_err(|e| LedgerError::MalformedDocument(e.to_string()))?;
    let ledger = doc.into_ledger()?;
    if ledger.auth_block().bytes() != auth_key.bytes() {
        return Err(LedgerError::IntegrityFailure);
    }
    Ok(ledger)
}

/// Reads the auth block out of a saved ledger without trusting anything else
/// in it. Used when the only copy of the auth key is the ledger file itself;
/// the caller must still run [`load_ledger`] with the result.
pub fn peek_auth_block(bytes: &[u8]) -> Result<KeyBlock, LedgerError> {
    let (doc, _) = split_tagged(bytes)?;
    let value: serde_json::Value =
        serde_json::from_slice(doc).map_err(|e| LedgerError::MalformedDocument(e.to_string()))?;
    let hex_auth = value
        .get("blocks")
        .and_then(|b| b.get(0))
        .filter(|b| b.get("index").and_then(|i| i.as_u64()) == Some(0))
        .and_then(|b| b.get("hexBytes"))
        .and_then(|h| h.as_str())
        .ok_or_else(|| LedgerError::MalformedDocument("no auth block".into()))?;
    let bytes = hexbytes::decode_lower(hex_auth)
        .ok_or_else(|| LedgerError::MalformedDocument("bad auth block encoding".into()))?;
    Ok(KeyBlock::new(0, bytes, BlockState::Fresh))
}
