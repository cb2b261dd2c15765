//! Embedded file-backed event log.
//!
//! `events.log` is a sequence of frames:
//!
//! ```text
//! u32 LE payload length | u32 LE CRC-32 of payload | payload (JSON EventRecord)
//! ```
//!
//! A frame whose length runs past the end of the file, or whose checksum does
//! not match, halts reading with [`StoreError::CorruptEvent`].

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{check_continuity, EventStore, Snapshot, StoreError};
use crate::engine::events::EventRecord;

const LOG_FILE: &str = "events.log";
const SNAPSHOT_FILE: &str = "snapshot.json";
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone)]
pub struct FileStoreOptions {
    /// `fsync` after every append.
    pub sync: bool,
    pub max_bytes: Option<u64>,
}

impl Default for FileStoreOptions {
    fn default() -> Self {
        Self {
            sync: true,
            max_bytes: None,
        }
    }
}

#[derive(Debug)]
pub struct FileEventStore {
    dir: PathBuf,
    options: FileStoreOptions,
    last_seq: u64,
    len_bytes: u64,
}

pub fn encode_frame(record: &EventRecord) -> Result<Vec<u8>, StoreError> {
    let payload = serde_json::to_vec(record)?;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Decodes every frame in `bytes`, checking checksums and sequence continuity.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<EventRecord>, StoreError> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let expected_seq = out.len() as u64 + 1;
        let corrupt = |reason: String| StoreError::CorruptEvent {
            sequence_no: expected_seq,
            offset: offset as u64,
            reason,
        };
        if bytes.len() - offset < HEADER_LEN {
            return Err(corrupt(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len() - offset
            )));
        }
        let len = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(bytes[offset + 4..offset + 8].try_into().unwrap());
        let start = offset + HEADER_LEN;
        let available = bytes.len() - start;
        if len > available {
            return Err(corrupt(format!("truncated payload: {available} of {len} bytes")));
        }
        let payload = &bytes[start..start + len];
        let actual = crc32fast::hash(payload);
        if actual != crc {
            return Err(corrupt(format!("checksum mismatch: stored {crc:08x}, computed {actual:08x}")));
        }
        let record: EventRecord =
            serde_json::from_slice(payload).map_err(|e| corrupt(format!("undecodable payload: {e}")))?;
        if record.sequence_no != expected_seq {
            return Err(corrupt(format!("sequence {} out of order", record.sequence_no)));
        }
        out.push(record);
        offset = start + len;
    }
    Ok(out)
}

impl FileEventStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::open_with(dir, FileStoreOptions::default())
    }

    /// Opens (creating if needed) the store in `dir`, verifying the whole log.
    pub fn open_with(dir: &Path, options: FileStoreOptions) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        if !path.exists() {
            File::create(&path)?;
        }
        let bytes = fs::read(&path)?;
        let records = decode_frames(&bytes)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            options,
            last_seq: records.len() as u64,
            len_bytes: bytes.len() as u64,
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    /// True when `dir` holds no events (or does not exist).
    pub fn is_empty_at(dir: &Path) -> bool {
        fs::metadata(dir.join(LOG_FILE)).map_or(true, |m| m.len() == 0)
    }

    /// Deletes the files this store owns in `dir`.
    pub fn reset(dir: &Path) -> Result<(), StoreError> {
        for name in [LOG_FILE, SNAPSHOT_FILE] {
            let p = dir.join(name);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        Ok(())
    }
}

impl EventStore for FileEventStore {
    fn append(&mut self, records: &[EventRecord]) -> Result<(), StoreError> {
        check_continuity(self.last_seq, records)?;
        let mut buf = Vec::new();
        for rec in records {
            buf.extend(encode_frame(rec)?);
        }
        if let Some(limit) = self.options.max_bytes {
            let needed = self.len_bytes + buf.len() as u64;
            if needed > limit {
                return Err(StoreError::StorageFull { needed, limit });
            }
        }
        let mut file = OpenOptions::new().append(true).open(self.log_path())?;
        file.write_all(&buf)?;
        file.flush()?;
        if self.options.sync {
            file.sync_data()?;
        }
        self.len_bytes += buf.len() as u64;
        self.last_seq += records.len() as u64;
        Ok(())
    }

    fn read_from(&self, from_seq: u64) -> Result<Vec<EventRecord>, StoreError> {
        let mut bytes = Vec::new();
        File::open(self.log_path())?.read_to_end(&mut bytes)?;
        let mut records = decode_frames(&bytes)?;
        records.retain(|r| r.sequence_no >= from_seq);
        Ok(records)
    }

    fn last_seq(&self) -> u64 {
        self.last_seq
    }

    fn save_snapshot(&mut self, snapshot: &Snapshot) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec(snapshot)?)?;
        fs::rename(&tmp, self.snapshot_path())?;
        Ok(())
    }

    fn load_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        let path = self.snapshot_path();
        if !path.exists() {
            return Ok(None);
        }
        let snapshot: Snapshot = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Some(snapshot))
    }

    fn describe(&self) -> String {
        format!("file:{}", self.dir.display())
    }
}
