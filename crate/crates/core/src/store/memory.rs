use super::{check_continuity, EventStore, Snapshot, StoreError};
use crate::engine::events::EventRecord;

#[derive(Debug, Default)]
pub struct MemoryEventStore {
    records: Vec<EventRecord>,
    snapshot: Option<Snapshot>,
    capacity: Option<usize>,
}

impl MemoryEventStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store refusing to hold more than `capacity` events.
    pub fn with_capacity_limit(capacity: usize) -> Self {
        Self {
            capacity: Some(capacity),
            ..Self::default()
        }
    }
}

impl EventStore for MemoryEventStore {
    fn append(&mut self, records: &[EventRecord]) -> Result<(), StoreError> {
        check_continuity(self.last_seq(), records)?;
        if let Some(limit) = self.capacity {
            let needed = self.records.len() + records.len();
            if needed > limit {
                return Err(StoreError::StorageFull {
                    needed: needed as u64,
                    limit: limit as u64,
                });
            }
        }
        self.records.extend_from_slice(records);
        Ok(())
    }

    fn read_from(&self, from_seq: u64) -> Result<Vec<EventRecord>, StoreError> {
        let start = from_seq.saturating_sub(1) as usize;
        Ok(self.records.get(start..).map(<[_]>::to_vec).unwrap_or_default())
    }

    fn last_seq(&self) -> u64 {
        self.records.len() as u64
    }

    fn save_snapshot(&mut self, snapshot: &Snapshot) -> Result<(), StoreError> {
        self.snapshot = Some(snapshot.clone());
        Ok(())
    }

    fn load_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        Ok(self.snapshot.clone())
    }

    fn describe(&self) -> String {
        "memory:".to_string()
    }
}
