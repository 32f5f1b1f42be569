use std::io::{BufRead, Write};
use std::sync::RwLock;

use rand::{Rng, RngCore};

use super::{
    genesis_pulse, link_failure, next_pulse, verify_chain, BeaconError, ChainFailure, Pulse,
};

/// Append-only, hash-linked pulse log starting at index 0.
///
/// Reads take a shared lock and writers an exclusive one, so a reader sees
/// either the whole of an appended pulse or none of it.
#[derive(Debug, Default)]
pub struct PulseStore {
    pulses: RwLock<Vec<Pulse>>,
}

impl PulseStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store from a full chain, rejecting anything `verify_chain`
    /// rejects or that does not start at genesis.
    pub fn from_pulses(pulses: Vec<Pulse>) -> Result<Self, BeaconError> {
        if let Some(first) = pulses.first() {
            if first.index != 0 {
                return Err(BeaconError::AppendRejected {
                    index: first.index,
                    reason: ChainFailure::IndexGap,
                });
            }
            let verdict = verify_chain(&pulses)?;
            if !verdict.ok() {
                return Err(BeaconError::InvalidChain(verdict));
            }
        }
        Ok(Self {
            pulses: RwLock::new(pulses),
        })
    }

    /// Generates a fresh chain of `count` pulses with timestamps
    /// `start_timestamp, start_timestamp + 1, ...`.
    pub fn generate<R: RngCore + ?Sized>(
        rng: &mut R,
        count: usize,
        start_timestamp: u64,
    ) -> Result<Self, BeaconError> {
        let store = Self::new();
        for i in 0..count as u64 {
            store.append_next(rng, start_timestamp + i)?;
        }
        Ok(store)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Vec<Pulse>> {
        self.pulses.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Vec<Pulse>> {
        self.pulses.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends an externally produced pulse after checking it links onto the tip.
    pub fn append(&self, pulse: Pulse) -> Result<(), BeaconError> {
        let mut pulses = self.write();
        let expected = pulses.len() as u64;
        if pulse.self_check().is_err() {
            return Err(BeaconError::AppendRejected {
                index: expected,
                reason: ChainFailure::ChainHashMismatch,
            });
        }
        if let Some(reason) = link_failure(pulses.last(), &pulse, expected) {
            return Err(BeaconError::AppendRejected {
                index: pulse.index,
                reason,
            });
        }
        pulses.push(pulse);
        Ok(())
    }

    /// Produces and appends the next pulse (genesis if empty) under one lock.
    pub fn append_next<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        timestamp: u64,
    ) -> Result<Pulse, BeaconError> {
        let mut pulses = self.write();
        let pulse = match pulses.last() {
            None => genesis_pulse(rng, timestamp)?,
            Some(tip) => next_pulse(tip, rng, timestamp.max(tip.timestamp))?,
        };
        pulses.push(pulse.clone());
        Ok(pulse)
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn get(&self, index: u64) -> Option<Pulse> {
        let idx = usize::try_from(index).ok()?;
        self.read().get(idx).cloned()
    }

    pub fn latest(&self) -> Option<Pulse> {
        self.read().last().cloned()
    }

    pub fn latest_index(&self) -> Option<u64> {
        self.read().last().map(|p| p.index)
    }

    /// Inclusive range, clamped to the stored tip. Empty if `from` is past it.
    pub fn range(&self, from: u64, to: u64) -> Vec<Pulse> {
        let pulses = self.read();
        let Ok(from) = usize::try_from(from) else {
            return Vec::new();
        };
        let to = usize::try_from(to)
            .unwrap_or(usize::MAX)
            .min(pulses.len().saturating_sub(1));
        if pulses.is_empty() || from > to {
            return Vec::new();
        }
        pulses[from..=to].to_vec()
    }

    pub fn snapshot(&self) -> Vec<Pulse> {
        self.read().clone()
    }

    pub fn export_jsonl<W: Write>(&self, out: W) -> Result<(), BeaconError> {
        write_jsonl(&self.read(), out)
    }

    pub fn import_jsonl<R: BufRead>(input: R) -> Result<Self, BeaconError> {
        Self::from_pulses(read_jsonl(input)?)
    }
}

/// One pulse JSON object per line, in the order given.
pub fn write_jsonl<W: Write>(pulses: &[Pulse], mut out: W) -> Result<(), BeaconError> {
    for p in pulses {
        serde_json::to_writer(&mut out, p).map_err(|e| BeaconError::Malformed(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a JSON-lines pulse file. Blank lines are skipped; nothing is verified.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Pulse>, BeaconError> {
    let mut pulses = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pulse = serde_json::from_str(&line)
            .map_err(|e| BeaconError::Malformed(format!("line {}: {e}", n + 1)))?;
        pulses.push(pulse);
    }
    Ok(pulses)
}

/// Picks a pulse uniformly from `0..=latest - min_age`, so none of the
/// `min_age` newest pulses can ever be chosen.
pub fn select_historical<R: RngCore + ?Sized>(
    store: &PulseStore,
    rng: &mut R,
    min_age: u64,
) -> Result<Pulse, BeaconError> {
    if min_age == 0 {
        return Err(BeaconError::BadMinAge);
    }
    let pulses = store.read();
    let latest = pulses.last().map(|p| p.index);
    let newest_eligible = latest
        .and_then(|l| l.checked_sub(min_age))
        .ok_or(BeaconError::HistoryTooShort { latest, min_age })?;
    let pick = rng.gen_range(0..=newest_eligible);
    Ok(pulses[pick as usize].clone())
}
