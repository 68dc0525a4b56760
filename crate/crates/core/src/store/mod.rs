//! Single-node lakehouse storage.
//!
//! Layout under the store root:
//!
//! ```text
//! <root>/ledgers/<name>.jsonl   append-only record logs
//! <root>/blobs/<xx>/<digest>    content-addressed payloads
//! <root>/LOCK                   single-writer lock
//! ```
//!
//! Updates are re-appends of a record with the same id; the index keeps the
//! latest one. The index is a cache and can be rebuilt from the ledgers at
//! any time.

pub mod blobs;
pub mod index;
pub mod ledger;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use blobs::BlobZone;
pub use index::{HistoryEntry, Index};
pub use ledger::Ledger;

use crate::error::{Error, Result};
use crate::metamodel::{validate_entity, Digest, Id, Record, Timestamp};
use index::Overlay;

/// Whether appends are flushed to stable storage before returning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Durability {
    /// `fsync` after every append (or batch).
    #[default]
    Fsync,
    /// Leave flushing to the OS.
    Buffered,
}

/// One ledger line dropped during recovery.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedLine {
    pub ledger: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub dropped: Vec<DroppedLine>,
}

impl RecoveryReport {
    pub fn is_clean(&self) -> bool {
        self.dropped.is_empty()
    }
}

pub struct Store {
    root: PathBuf,
    index: Index,
    blobs: BlobZone,
    seqs: BTreeMap<Ledger, u64>,
    lock: Option<File>,
    durability: Durability,
    clock: Timestamp,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("root", &self.root)
            .field("records", &self.index.len())
            .field("writable", &self.lock.is_some())
            .finish()
    }
}

impl Store {
    /// Creates the directory layout with ten empty ledgers.
    pub fn init(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if root.exists() {
            let mut entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
            if entries.next().is_some() {
                return Err(Error::PathOccupied(root));
            }
        }
        let ledgers = root.join("ledgers");
        fs::create_dir_all(&ledgers).map_err(|e| Error::io(&ledgers, e))?;
        fs::create_dir_all(root.join("blobs")).map_err(|e| Error::io(root.join("blobs"), e))?;
        for ledger in Ledger::ALL {
            let p = ledgers.join(ledger.file_name());
            File::create(&p).map_err(|e| Error::io(&p, e))?;
        }
        Self::open(root)
    }

    /// Opens a store for writing. Takes the writer lock, drops torn ledger
    /// tails and rebuilds the index.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if !root.join("ledgers").is_dir() {
            return Err(Error::not_found("store", root.display().to_string()));
        }
        let lock_path = root.join("LOCK");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(Error::Locked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(Error::io(&lock_path, e)),
        }
        let mut store = Self::unopened(root, Some(lock));
        store.recover()?;
        Ok(store)
    }

    /// Opens a store for reading. A torn final line is skipped, not
    /// repaired, so readers always see a consistent prefix.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if !root.join("ledgers").is_dir() {
            return Err(Error::not_found("store", root.display().to_string()));
        }
        let mut store = Self::unopened(root, None);
        store.rebuild_index()?;
        Ok(store)
    }

    fn unopened(root: PathBuf, lock: Option<File>) -> Self {
        Store {
            blobs: BlobZone::new(root.join("blobs")),
            root,
            index: Index::default(),
            seqs: BTreeMap::new(),
            lock,
            durability: Durability::default(),
            clock: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    /// Mutable access to the cached index. Changes are not persisted.
    pub fn index_mut(&mut self) -> &mut Index {
        &mut self.index
    }

    pub fn blobs(&self) -> &BlobZone {
        &self.blobs
    }

    pub fn is_writable(&self) -> bool {
        self.lock.is_some()
    }

    pub fn set_durability(&mut self, durability: Durability) {
        self.durability = durability;
    }

    pub fn ledger_path(&self, ledger: Ledger) -> PathBuf {
        self.root.join("ledgers").join(ledger.file_name())
    }

    /// Last sequence number written to a ledger.
    pub fn last_seq(&self, ledger: Ledger) -> u64 {
        self.seqs.get(&ledger).copied().unwrap_or(0)
    }

    /// Strictly increasing UTC timestamp at microsecond resolution.
    pub fn now(&mut self) -> Timestamp {
        let wall = Utc::now();
        let wall = DateTime::from_timestamp_micros(wall.timestamp_micros()).unwrap_or(wall);
        let next = self.clock + chrono::Duration::microseconds(1);
        self.clock = wall.max(next);
        self.clock
    }

    /// Appends a record to the ledger named `ledger_name`.
    pub fn append_record(&mut self, ledger_name: &str, record: Record) -> Result<u64> {
        let ledger = Ledger::parse(ledger_name)?;
        if Ledger::for_record(&record) != ledger {
            return Err(Error::InvalidArgument(format!(
                "{} records belong in the {} ledger",
                record.kind(),
                Ledger::for_record(&record)
            )));
        }
        self.append(record)
    }

    /// Validates and appends one record, returning its sequence number.
    pub fn append(&mut self, record: Record) -> Result<u64> {
        Ok(self.append_batch(vec![record])?[0])
    }

    /// Validates every record against the index plus the earlier records of
    /// the batch, then appends them in order. Nothing is written if any
    /// record fails validation.
    pub fn append_batch(&mut self, records: Vec<Record>) -> Result<Vec<u64>> {
        if self.lock.is_none() {
            return Err(Error::ReadOnly);
        }
        let batch_ids: std::collections::HashSet<Id> = records.iter().map(|r| r.id().clone()).collect();
        let mut pending = Index::default();
        for record in &records {
            let violations = validate_entity(
                record,
                &Overlay {
                    base: &self.index,
                    pending: &pending,
                    batch_ids: &batch_ids,
                },
            );
            if !violations.is_empty() {
                return Err(Error::ValidationFailed(violations));
            }
            pending.apply(record.clone());
        }

        let mut lines: BTreeMap<Ledger, Vec<u8>> = BTreeMap::new();
        let mut seqs = Vec::with_capacity(records.len());
        let mut next = self.seqs.clone();
        for record in &records {
            let ledger = Ledger::for_record(record);
            let seq = next.entry(ledger).or_insert(0);
            *seq += 1;
            seqs.push(*seq);
            lines
                .entry(ledger)
                .or_default()
                .extend(ledger::encode_line(*seq, record)?);
        }
        for (ledger, bytes) in &lines {
            let path = self.ledger_path(*ledger);
            let mut file = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            file.write_all(bytes).map_err(|e| Error::io(&path, e))?;
            if self.durability == Durability::Fsync {
                file.sync_data().map_err(|e| Error::io(&path, e))?;
            }
        }
        self.seqs = next;
        for record in records {
            if let Some(t) = record.timestamp() {
                self.clock = self.clock.max(t);
            }
            self.index.apply(record);
        }
        Ok(seqs)
    }

    pub fn put_blob(&self, bytes: &[u8]) -> Result<Digest> {
        if self.lock.is_none() {
            return Err(Error::ReadOnly);
        }
        self.blobs.put(bytes, self.durability == Durability::Fsync)
    }

    pub fn get_blob(&self, digest: &Digest) -> Result<Vec<u8>> {
        self.blobs.get(digest)
    }

    pub fn has_blob(&self, digest: &Digest) -> bool {
        self.blobs.contains(digest)
    }

    /// Drops torn trailing lines from every ledger, then rebuilds the
    /// index. A damaged line anywhere else is reported as corruption and
    /// nothing is modified.
    pub fn recover(&mut self) -> Result<RecoveryReport> {
        let mut scans = Vec::new();
        for ledger in Ledger::ALL {
            let path = self.ledger_path(ledger);
            scans.push((ledger, path.clone(), ledger::scan_file(ledger, &path)?));
        }
        let mut report = RecoveryReport::default();
        for (ledger, path, scan) in &scans {
            if let Some((line, reason)) = &scan.torn_tail {
                if self.lock.is_none() {
                    return Err(Error::ReadOnly);
                }
                let file = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                file.set_len(scan.valid_len).map_err(|e| Error::io(path, e))?;
                file.sync_all().map_err(|e| Error::io(path, e))?;
                report.dropped.push(DroppedLine {
                    ledger: ledger.name().to_string(),
                    line: *line,
                    reason: reason.clone(),
                });
            }
        }
        self.load_scans(scans.into_iter().map(|(l, _, s)| (l, s)).collect());
        Ok(report)
    }

    /// Re-folds every intact ledger line into a fresh index.
    pub fn rebuild_index(&mut self) -> Result<()> {
        let mut scans = Vec::new();
        for ledger in Ledger::ALL {
            let path = self.ledger_path(ledger);
            scans.push((ledger, ledger::scan_file(ledger, &path)?));
        }
        self.load_scans(scans);
        Ok(())
    }

    fn load_scans(&mut self, scans: Vec<(Ledger, ledger::Scan)>) {
        let mut index = Index::default();
        let mut seqs = BTreeMap::new();
        for (ledger, scan) in scans {
            let last = scan.records.last().map(|(seq, _)| *seq).unwrap_or(0);
            seqs.insert(ledger, last);
            for (_, record) in scan.records {
                index.apply(record);
            }
        }
        if let Some(t) = index.latest_timestamp() {
            self.clock = self.clock.max(t);
        }
        self.index = index;
        self.seqs = seqs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::*;

    fn dataset(store: &mut Store, name: &str) -> Record {
        Record::Dataset(Dataset {
            id: Id::generate("dataset"),
            name: name.into(),
            description: String::new(),
            domain: "test".into(),
            hemisphere: Hemisphere::Northern,
            created_at: store.now(),
        })
    }

    #[test]
    fn fresh_store_has_ten_empty_ledgers() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        let store = Store::init(&root).unwrap();
        for ledger in Ledger::ALL {
            assert_eq!(fs::metadata(store.ledger_path(ledger)).unwrap().len(), 0);
        }
        assert!(store.index().is_empty());
        assert!(root.join("LOCK").exists());
    }

    #[test]
    fn init_on_occupied_path_fails() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), b"x").unwrap();
        assert!(matches!(Store::init(dir.path()), Err(Error::PathOccupied(_))));
    }

    #[test]
    fn init_then_open_gives_identical_empty_index() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        let a = Store::init(&root).unwrap().index().clone();
        let b = Store::open(&root).unwrap().index().clone();
        assert_eq!(a, b);
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        let _first = Store::init(&root).unwrap();
        assert!(matches!(Store::open(&root), Err(Error::Locked(_))));
        assert!(Store::open_read_only(&root).is_ok());
    }

    #[test]
    fn appends_number_from_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let a = dataset(&mut store, "a");
        let b = dataset(&mut store, "b");
        assert_eq!(store.append(a).unwrap(), 1);
        assert_eq!(store.append(b).unwrap(), 2);
    }

    #[test]
    fn invalid_record_leaves_ledger_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let bad = dataset(&mut store, "  ");
        let before = fs::read(store.ledger_path(Ledger::Datasets)).unwrap();
        assert!(matches!(store.append(bad), Err(Error::ValidationFailed(_))));
        assert_eq!(fs::read(store.ledger_path(Ledger::Datasets)).unwrap(), before);
        assert!(store.index().is_empty());
    }

    #[test]
    fn ledger_name_checks() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let d = dataset(&mut store, "a");
        assert!(matches!(store.append_record("nope", d.clone()), Err(Error::UnknownLedger(_))));
        assert_eq!(store.append_record("datasets", d).unwrap(), 1);
    }

    #[test]
    fn blobs_round_trip_and_dedupe() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::init(dir.path().join("s")).unwrap();
        let d = store.put_blob(b"abc").unwrap();
        assert_eq!(d.as_str(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(store.get_blob(&d).unwrap(), b"abc");
        assert_eq!(store.put_blob(b"abc").unwrap(), d);
        let path = store.blobs().path_of(&d);
        assert!(path.ends_with(format!("ba/{d}")));
        assert_eq!(store.blobs().list().unwrap(), vec![d]);
        let unknown = content_hash(b"nope");
        assert!(matches!(store.get_blob(&unknown), Err(Error::UnknownBlob(_))));
    }

    #[test]
    fn last_writer_wins_on_rebuild() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let date = store.now();
        let mut exp = Experiment {
            id: Id::generate("experiment"),
            name: "e".into(),
            research_question: "q".into(),
            date,
            team: vec![],
            settings: Default::default(),
            cycle: 1,
            status: ExperimentStatus::Draft,
        };
        store.append(exp.clone().into()).unwrap();
        exp.status = ExperimentStatus::Active;
        store.append(exp.clone().into()).unwrap();
        store.rebuild_index().unwrap();
        assert_eq!(store.index().experiments().next().unwrap().status, ExperimentStatus::Active);
    }

    #[test]
    fn clean_recovery_reports_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let d = dataset(&mut store, "a");
        store.append(d).unwrap();
        assert!(store.recover().unwrap().is_clean());
        assert_eq!(store.index().len(), 1);
    }

    #[test]
    fn clock_is_strictly_increasing() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::init(dir.path().join("s")).unwrap();
        let stamps: Vec<_> = (0..100).map(|_| store.now()).collect();
        assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    }
}
