//! On-disk layout of one shard.
//!
//! ```text
//! data/store.json               {"format": 1, "shard_count": N}
//! data/shard-<i>/snapshot.json  master state at some sequence number
//! data/shard-<i>/oplog.log      writes after the snapshot
//! ```
//!
//! `oplog.log` is a sequence of records, each a little-endian `u32` byte
//! length followed by that many bytes of JSON ([`OplogEntry`]). Recovery
//! loads the snapshot and replays every record with a higher sequence
//! number. A torn record at the tail (crash mid-append) is cut off; it was
//! never acknowledged.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NodeId, OplogEntry, StoreError, StoredDocument};

pub const FORMAT_VERSION: u32 = 1;
const LOG_FILE: &str = "oplog.log";
const SNAPSHOT_FILE: &str = "snapshot.json";
const META_FILE: &str = "store.json";

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct StoreMeta {
    pub format: u32,
    pub shard_count: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Snapshot {
    pub format: u32,
    pub shard_index: u32,
    pub epoch: u64,
    pub seq: u64,
    pub master: NodeId,
    pub slaves: Vec<NodeId>,
    pub documents: Vec<StoredDocument>,
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

/// Reads or creates `store.json`, refusing a shard count change.
pub(crate) fn open_meta(dir: &Path, shard_count: u32) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(META_FILE);
    match fs::read(&path) {
        Ok(bytes) => {
            let meta: StoreMeta = serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
            if meta.format != FORMAT_VERSION {
                return Err(StoreError::Corrupt(format!(
                    "{}: unsupported format {}",
                    path.display(),
                    meta.format
                )));
            }
            if meta.shard_count != shard_count {
                return Err(StoreError::ShardCountMismatch {
                    on_disk: meta.shard_count,
                    requested: shard_count,
                });
            }
            Ok(())
        }
        Err(e) if e.kind() == ErrorKind::NotFound => {
            let meta = StoreMeta {
                format: FORMAT_VERSION,
                shard_count,
            };
            write_atomic(&path, &serde_json::to_vec_pretty(&meta).expect("meta serializes"))
        }
        Err(e) => Err(io_err(&path, e)),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    if let Some(parent) = path.parent() {
        if let Ok(d) = File::open(parent) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Durable files of one shard.
#[derive(Debug)]
pub(crate) struct ShardFiles {
    dir: PathBuf,
    log: File,
    fsync: bool,
}

pub(crate) struct Recovered {
    pub files: ShardFiles,
    pub snapshot: Option<Snapshot>,
    pub tail: Vec<OplogEntry>,
}

impl ShardFiles {
    pub fn shard_dir(root: &Path, index: u32) -> PathBuf {
        root.join(format!("shard-{index}"))
    }

    /// Opens the shard directory, loading the snapshot and the log records
    /// that follow it.
    pub fn open(root: &Path, index: u32, fsync: bool) -> Result<Recovered, StoreError> {
        let dir = Self::shard_dir(root, index);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot = match fs::read(&snap_path) {
            Ok(bytes) => {
                let s: Snapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", snap_path.display())))?;
                if s.format != FORMAT_VERSION || s.shard_index != index {
                    return Err(StoreError::Corrupt(format!(
                        "{}: snapshot belongs to another shard or format",
                        snap_path.display()
                    )));
                }
                Some(s)
            }
            Err(e) if e.kind() == ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&snap_path, e)),
        };
        let base_seq = snapshot.as_ref().map_or(0, |s| s.seq);

        let log_path = dir.join(LOG_FILE);
        let mut raw = Vec::new();
        match File::open(&log_path) {
            Ok(mut f) => {
                f.read_to_end(&mut raw).map_err(|e| io_err(&log_path, e))?;
            }
            Err(e) if e.kind() != ErrorKind::NotFound => return Err(io_err(&log_path, e)),
            Err(_) => {}
        }
        let (records, good_len) = decode_log(&raw);
        if good_len < raw.len() {
            tracing::warn!(
                shard = index,
                dropped = raw.len() - good_len,
                "truncating torn tail of oplog"
            );
        }
        let mut tail = Vec::new();
        let mut expected = base_seq + 1;
        for entry in records {
            if entry.seq <= base_seq {
                continue;
            }
            if entry.seq != expected {
                return Err(StoreError::Corrupt(format!(
                    "{}: expected sequence {expected}, found {}",
                    log_path.display(),
                    entry.seq
                )));
            }
            expected += 1;
            tail.push(entry);
        }

        let log = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&log_path)
            .map_err(|e| io_err(&log_path, e))?;
        log.set_len(good_len as u64).map_err(|e| io_err(&log_path, e))?;
        let mut files = ShardFiles { dir, log, fsync };
        files.seek_end()?;
        Ok(Recovered {
            files,
            snapshot,
            tail,
        })
    }

    fn seek_end(&mut self) -> Result<(), StoreError> {
        use std::io::{Seek, SeekFrom};
        self.log
            .seek(SeekFrom::End(0))
            .map(|_| ())
            .map_err(|e| io_err(&self.dir.join(LOG_FILE), e))
    }

    /// Appends one record; returns once the bytes reached the OS (and the
    /// disk, with `fsync`).
    pub fn append(&mut self, entry: &OplogEntry) -> Result<(), StoreError> {
        let json = serde_json::to_vec(entry).expect("oplog entries serialize");
        let mut buf = Vec::with_capacity(4 + json.len());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        let path = self.dir.join(LOG_FILE);
        self.log.write_all(&buf).map_err(|e| io_err(&path, e))?;
        if self.fsync {
            self.log.sync_data().map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Replaces the snapshot and empties the log.
    pub fn write_snapshot(&mut self, snapshot: &Snapshot) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(snapshot).expect("snapshots serialize");
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &bytes)?;
        let path = self.dir.join(LOG_FILE);
        self.log.set_len(0).map_err(|e| io_err(&path, e))?;
        self.seek_end()?;
        if self.fsync {
            self.log.sync_all().map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

/// Splits a log into complete records. Returns the records and the byte
/// length of the valid prefix.
fn decode_log(raw: &[u8]) -> (Vec<OplogEntry>, usize) {
    let mut out = Vec::new();
    let mut pos = 0;
    while raw.len() - pos >= 4 {
        let len = u32::from_le_bytes(raw[pos..pos + 4].try_into().unwrap()) as usize;
        let Some(body) = raw.get(pos + 4..pos + 4 + len) else {
            break;
        };
        match serde_json::from_slice::<OplogEntry>(body) {
            Ok(e) => out.push(e),
            Err(_) => break,
        }
        pos += 4 + len;
    }
    (out, pos)
}
