//! Relational backend over SQLite. Each row keeps the same CRC-32 as the
//! file log so corruption is detected the same way on read.

use std::path::Path;
use std::sync::Mutex;

use rusqlite::{params, Connection, OptionalExtension};

use super::{check_continuity, EventStore, Snapshot, StoreError};
use crate::engine::events::EventRecord;

pub struct SqliteEventStore {
    conn: Mutex<Connection>,
    location: String,
    last_seq: u64,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS events (
    sequence_no INTEGER PRIMARY KEY,
    kind        TEXT    NOT NULL,
    recorded_at TEXT    NOT NULL,
    payload     TEXT    NOT NULL,
    crc32       INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS snapshots (
    id          INTEGER PRIMARY KEY CHECK (id = 1),
    sequence_no INTEGER NOT NULL,
    body        TEXT    NOT NULL
);
";

impl SqliteEventStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        Self::init(conn, path.display().to_string())
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?, ":memory:".into())
    }

    fn init(conn: Connection, location: String) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        let last_seq: i64 =
            conn.query_row("SELECT COALESCE(MAX(sequence_no), 0) FROM events", [], |r| r.get(0))?;
        Ok(Self {
            conn: Mutex::new(conn),
            location,
            last_seq: last_seq as u64,
        })
    }
}

impl EventStore for SqliteEventStore {
    fn append(&mut self, records: &[EventRecord]) -> Result<(), StoreError> {
        check_continuity(self.last_seq, records)?;
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        for rec in records {
            let payload = serde_json::to_string(rec)?;
            let crc = crc32fast::hash(payload.as_bytes());
            tx.execute(
                "INSERT INTO events (sequence_no, kind, recorded_at, payload, crc32) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    rec.sequence_no as i64,
                    rec.event.kind(),
                    rec.recorded_at.to_rfc3339(),
                    payload,
                    i64::from(crc)
                ],
            )?;
        }
        tx.commit()?;
        self.last_seq += records.len() as u64;
        Ok(())
    }

    fn read_from(&self, from_seq: u64) -> Result<Vec<EventRecord>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(
            "SELECT sequence_no, payload, crc32 FROM events WHERE sequence_no >= ?1 ORDER BY sequence_no",
        )?;
        let rows = stmt.query_map(params![from_seq as i64], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, i64>(2)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (seq, payload, crc) = row?;
            let corrupt = |reason: String| StoreError::CorruptEvent {
                sequence_no: seq as u64,
                offset: 0,
                reason,
            };
            let actual = crc32fast::hash(payload.as_bytes());
            if i64::from(actual) != crc {
                return Err(corrupt(format!("checksum mismatch: stored {crc:08x}, computed {actual:08x}")));
            }
            let record: EventRecord =
                serde_json::from_str(&payload).map_err(|e| corrupt(format!("undecodable payload: {e}")))?;
            if record.sequence_no != seq as u64 {
                return Err(corrupt("payload sequence differs from row key".into()));
            }
            out.push(record);
        }
        Ok(out)
    }

    fn last_seq(&self) -> u64 {
        self.last_seq
    }

    fn save_snapshot(&mut self, snapshot: &Snapshot) -> Result<(), StoreError> {
        let body = serde_json::to_string(snapshot)?;
        self.conn.lock().unwrap().execute(
            "INSERT INTO snapshots (id, sequence_no, body) VALUES (1, ?1, ?2)
             ON CONFLICT(id) DO UPDATE SET sequence_no = excluded.sequence_no, body = excluded.body",
            params![snapshot.sequence_no as i64, body],
        )?;
        Ok(())
    }

    fn load_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        let conn = self.conn.lock().unwrap();
        let body: Option<String> = conn
            .query_row("SELECT body FROM snapshots WHERE id = 1", [], |r| r.get(0))
            .optional()?;
        body.map(|b| serde_json::from_str(&b).map_err(StoreError::from))
            .transpose()
    }

    fn describe(&self) -> String {
        format!("sqlite:{}", self.location)
    }
}
