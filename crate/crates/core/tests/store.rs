use std::fs;

use votelab_core::engine::{Actor, EngineConfig, Platform};
use votelab_core::fixture;
use votelab_core::store::file::FileStoreOptions;
use votelab_core::store::{self, EventStore, FileEventStore, MemoryEventStore, SqliteEventStore, StoreError};

fn seeded(store: Box<dyn EventStore>, config: EngineConfig) -> Platform {
    let p = Platform::open(store, config).unwrap();
    fixture::seed_covid(&p, 5, 30).unwrap();
    p.scheduler_tick(fixture::study_close_at());
    p
}

fn quick_file(dir: &std::path::Path) -> Box<dyn EventStore> {
    Box::new(
        FileEventStore::open_with(
            dir,
            FileStoreOptions {
                sync: false,
                max_bytes: None,
            },
        )
        .unwrap(),
    )
}

#[test]
fn backends_agree_on_state_hash() {
    let dir = tempfile::tempdir().unwrap();
    let memory = seeded(Box::new(MemoryEventStore::new()), EngineConfig::default());
    let file = seeded(quick_file(dir.path()), EngineConfig::default());
    let sqlite = seeded(Box::new(SqliteEventStore::open_in_memory().unwrap()), EngineConfig::default());
    assert_eq!(memory.state_hash(), file.state_hash());
    assert_eq!(memory.state_hash(), sqlite.state_hash());
    for p in [&memory, &file, &sqlite] {
        assert_eq!(p.replayed_state_hash().unwrap(), p.state_hash());
    }
}

#[test]
fn reopening_a_file_store_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let config = EngineConfig {
        snapshot_every: 100,
        ..EngineConfig::default()
    };
    let live = seeded(quick_file(dir.path()), config.clone());
    let hash = live.state_hash();
    let seq = live.last_seq();
    drop(live);
    assert!(dir.path().join("snapshot.json").exists());

    let reopened = Platform::open(quick_file(dir.path()), config).unwrap();
    assert_eq!(reopened.state_hash(), hash);
    assert_eq!(reopened.last_seq(), seq);
    // snapshot plus tail equals a full replay
    assert_eq!(reopened.replayed_state_hash().unwrap(), hash);
}

#[test]
fn sqlite_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let location = format!("sqlite:{}", dir.path().join("votelab.db").display());
    let live = seeded(store::open_store(&location).unwrap(), EngineConfig::default());
    let hash = live.state_hash();
    drop(live);
    let reopened = Platform::open(store::open_store(&location).unwrap(), EngineConfig::default()).unwrap();
    assert_eq!(reopened.state_hash(), hash);
}

#[test]
fn truncated_log_reports_the_cut() {
    let dir = tempfile::tempdir().unwrap();
    let live = seeded(quick_file(dir.path()), EngineConfig::default());
    let total = live.last_seq();
    drop(live);
    let log = dir.path().join("events.log");
    let bytes = fs::read(&log).unwrap();
    let frames = store::file::decode_frames(&bytes).unwrap();
    let cut_seq = total / 2;
    let offset: usize = frames[..(cut_seq - 1) as usize]
        .iter()
        .map(|r| store::file::encode_frame(r).unwrap().len())
        .sum();
    fs::write(&log, &bytes[..offset + 20]).unwrap();
    match FileEventStore::open(dir.path()) {
        Err(StoreError::CorruptEvent {
            sequence_no, offset: at, ..
        }) => {
            assert_eq!(sequence_no, cut_seq);
            assert_eq!(at, offset as u64);
        }
        other => panic!("expected CorruptEvent, got {other:?}"),
    }
}

#[test]
fn flipped_byte_fails_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    drop(seeded(quick_file(dir.path()), EngineConfig::default()));
    let log = dir.path().join("events.log");
    let mut bytes = fs::read(&log).unwrap();
    let at = bytes.len() / 3;
    bytes[at] ^= 0x20;
    fs::write(&log, &bytes).unwrap();
    let err = FileEventStore::open(dir.path()).unwrap_err();
    assert!(matches!(err, StoreError::CorruptEvent { .. }), "{err}");
}

#[test]
fn file_store_refuses_to_grow_past_its_limit() {
    let dir = tempfile::tempdir().unwrap();
    let store = FileEventStore::open_with(
        dir.path(),
        FileStoreOptions {
            sync: false,
            max_bytes: Some(4_000),
        },
    )
    .unwrap();
    let p = Platform::open(Box::new(store), EngineConfig::default()).unwrap();
    let err = fixture::seed_covid(&p, 1, 10).unwrap_err();
    assert_eq!(err.code(), "StorageFull");
    let hash = p.state_hash();
    drop(p);
    // what was acknowledged survives
    let reopened = Platform::open(quick_file(dir.path()), EngineConfig::default()).unwrap();
    assert_eq!(reopened.state_hash(), hash);
}

#[test]
fn seeding_needs_an_empty_store() {
    let p = Platform::in_memory(EngineConfig::default());
    fixture::seed_covid(&p, 1, 4).unwrap();
    assert_eq!(fixture::seed_covid(&p, 1, 4).unwrap_err().code(), "StoreNotEmpty");
}

#[test]
fn replayed_fixture_reproduces_tallies() {
    let p = seeded(Box::new(MemoryEventStore::new()), EngineConfig::default());
    let campaign = p.campaigns(&Actor::Admin)[0].campaign_id.clone();
    let live = p.get_results(&Actor::Admin, &campaign).unwrap();
    let records = p.events_from(1).unwrap();
    let mut mem = MemoryEventStore::new();
    mem.append(&records).unwrap();
    let again = Platform::open(Box::new(mem), EngineConfig::default()).unwrap();
    assert_eq!(again.get_results(&Actor::Admin, &campaign).unwrap(), live);
}

#[test]
fn unknown_locations_are_rejected() {
    assert!(matches!(
        store::open_store("postgres://db/votelab"),
        Err(StoreError::UnsupportedLocation(_))
    ));
    assert_eq!(store::open_store("memory:").unwrap().last_seq(), 0);
}
