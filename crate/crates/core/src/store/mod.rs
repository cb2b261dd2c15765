//! Durable event storage.
//!
//! Engine state is never written directly; every change is an [`Event`]
//! appended to a gapless, append-only stream and state is rebuilt by
//! replaying it. Stores may also keep a snapshot of replayed state to shorten
//! later replays.

pub mod file;
pub mod identity;
pub mod memory;
#[cfg(feature = "sqlite")]
pub mod sqlite;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::events::EventRecord;
use crate::engine::state::EngineState;

pub use file::FileEventStore;
pub use memory::MemoryEventStore;
#[cfg(feature = "sqlite")]
pub use sqlite::SqliteEventStore;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage full: appending {needed} bytes would exceed the {limit}-byte limit")]
    StorageFull { needed: u64, limit: u64 },
    #[error("corrupt event at sequence {sequence_no} (byte offset {offset}): {reason}")]
    CorruptEvent {
        sequence_no: u64,
        offset: u64,
        reason: String,
    },
    #[error("append out of order: expected sequence {expected}, got {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("snapshot rejected: {0}")]
    BadSnapshot(String),
    #[error("unsupported store location {0:?}")]
    UnsupportedLocation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[cfg(feature = "sqlite")]
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
}

/// Replayed state as of `sequence_no`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub sequence_no: u64,
    pub state_hash: String,
    pub state: EngineState,
}

impl Snapshot {
    pub fn of(state: &EngineState) -> Self {
        Self {
            sequence_no: state.last_seq,
            state_hash: state.state_hash(),
            state: state.clone(),
        }
    }

    fn verified(self) -> Result<Self, StoreError> {
        if self.state.last_seq != self.sequence_no {
            return Err(StoreError::BadSnapshot("sequence number mismatch".into()));
        }
        if self.state.state_hash() != self.state_hash {
            return Err(StoreError::BadSnapshot("state hash mismatch".into()));
        }
        Ok(self)
    }
}

pub trait EventStore: Send + Sync {
    /// Appends `records`, whose sequence numbers must continue the stream
    /// without gaps. Either all records are durable or none are visible.
    fn append(&mut self, records: &[EventRecord]) -> Result<(), StoreError>;

    /// All records with `sequence_no >= from_seq`, in order.
    fn read_from(&self, from_seq: u64) -> Result<Vec<EventRecord>, StoreError>;

    fn last_seq(&self) -> u64;

    fn save_snapshot(&mut self, _snapshot: &Snapshot) -> Result<(), StoreError> {
        Ok(())
    }

    fn load_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        Ok(None)
    }

    fn describe(&self) -> String;
}

pub(crate) fn check_continuity(last_seq: u64, records: &[EventRecord]) -> Result<(), StoreError> {
    for (i, rec) in records.iter().enumerate() {
        let expected = last_seq + 1 + i as u64;
        if rec.sequence_no != expected {
            return Err(StoreError::SequenceGap {
                expected,
                found: rec.sequence_no,
            });
        }
    }
    Ok(())
}

/// Rebuilds state from the latest usable snapshot plus the tail of the log.
pub fn replay(store: &dyn EventStore) -> Result<EngineState, StoreError> {
    let base = match store.load_snapshot()? {
        Some(s) if s.sequence_no <= store.last_seq() => s.verified()?.state,
        _ => EngineState::default(),
    };
    replay_onto(store, base)
}

/// Rebuilds state from the first event, ignoring snapshots.
pub fn replay_full(store: &dyn EventStore) -> Result<EngineState, StoreError> {
    replay_onto(store, EngineState::default())
}

/// Applies every event after `base.last_seq` to `base`.
pub fn replay_onto(store: &dyn EventStore, mut base: EngineState) -> Result<EngineState, StoreError> {
    for rec in store.read_from(base.last_seq + 1)? {
        if rec.sequence_no != base.last_seq + 1 {
            return Err(StoreError::CorruptEvent {
                sequence_no: base.last_seq + 1,
                offset: 0,
                reason: format!("found sequence {} instead", rec.sequence_no),
            });
        }
        base.apply(&rec);
    }
    Ok(base)
}

/// Opens a store from a location string:
/// `memory:`, `sqlite:<path>`, `file:<dir>`, or a bare directory path.
pub fn open_store(location: &str) -> Result<Box<dyn EventStore>, StoreError> {
    if location == "memory:" {
        return Ok(Box::new(MemoryEventStore::new()));
    }
    if let Some(path) = location.strip_prefix("sqlite:") {
        #[cfg(feature = "sqlite")]
        {
            let path = path.strip_prefix("//").unwrap_or(path);
            return Ok(Box::new(SqliteEventStore::open(Path::new(path))?));
        }
        #[cfg(not(feature = "sqlite"))]
        {
            let _ = path;
            return Err(StoreError::UnsupportedLocation(location.to_string()));
        }
    }
    let dir = location.strip_prefix("file:").unwrap_or(location);
    if dir.contains("://") {
        return Err(StoreError::UnsupportedLocation(location.to_string()));
    }
    Ok(Box::new(FileEventStore::open(Path::new(dir))?))
}
