//! Sharded, replicated document store.
//!
//! Documents are routed to a shard by FNV-1a-64 of `collection/key`. Each
//! shard is a replica set: one master that takes every write and appends it
//! to a sequence-numbered oplog, and slaves that apply the oplog in order
//! when replication is stepped. Replication is pull-based and explicit so
//! tests can script any interleaving; the server drives it from a timer.
//!
//! Failover is manual: mark the master down, then promote a slave. Writes
//! the promoted slave had not applied are discarded and counted.

mod persist;
pub mod routing;

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use routing::{fnv1a64, routing_key, shard_for_key, ShardMap};

use persist::{ShardFiles, Snapshot};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("shard count must be at least 1")]
    ZeroShards,
    #[error("shard {shard} has no reachable master")]
    NoMaster { shard: u32 },
    #[error("store is closed")]
    StoreClosed,
    #[error("unknown shard {0}")]
    UnknownShard(u32),
    #[error("node {node} is not a slave of shard {shard}")]
    NodeNotSlave { shard: u32, node: NodeId },
    #[error("master of shard {shard} is still up")]
    MasterStillUp { shard: u32 },
    #[error("document is at version {current:?}, expected {expected:?}")]
    VersionConflict {
        expected: Option<u64>,
        current: Option<u64>,
    },
    #[error("data directory holds {on_disk} shards, {requested} requested")]
    ShardCountMismatch { on_disk: u32, requested: u32 },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    fn new(shard: u32, n: u32) -> Self {
        Self(format!("shard-{shard}-node-{n}"))
    }

    fn ordinal(&self) -> u32 {
        self.0
            .rsplit('-')
            .next()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadPreference {
    #[default]
    Master,
    /// Any slave may answer; the result may be stale.
    SlaveOk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub collection: String,
    pub key: String,
    pub body: Arc<Value>,
    /// 1 on first write, +1 per subsequent write of the same key.
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteReceipt {
    pub shard_index: u32,
    /// Replica-set epoch the write was accepted in.
    pub epoch: u64,
    pub sequence: u64,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WriteOp {
    Put {
        collection: String,
        key: String,
        body: Arc<Value>,
        version: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OplogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub op: WriteOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaSet {
    pub shard_index: u32,
    pub epoch: u64,
    pub master: NodeId,
    pub slaves: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Promotion {
    pub replica_set: ReplicaSet,
    /// Writes acknowledged by the old master that the new one never saw.
    pub lost_writes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlaveStatus {
    pub node: NodeId,
    pub applied_seq: u64,
    pub lag: u64,
    pub doc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardStatus {
    pub shard_index: u32,
    pub epoch: u64,
    pub master: NodeId,
    pub master_up: bool,
    pub master_seq: u64,
    pub doc_count: usize,
    pub replication_paused: bool,
    pub slaves: Vec<SlaveStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub shard_count: u32,
    pub slaves_per_shard: u32,
    /// Snapshot a shard after this many logged writes.
    pub snapshot_every: u64,
    /// `fsync` every log append before acknowledging.
    pub fsync: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            shard_count: 3,
            slaves_per_shard: 2,
            snapshot_every: 1000,
            fsync: true,
        }
    }
}

type DocKey = (String, String);

#[derive(Debug, Clone)]
struct Node {
    id: NodeId,
    docs: BTreeMap<DocKey, StoredDocument>,
    applied_seq: u64,
}

impl Node {
    fn empty(id: NodeId) -> Self {
        Self {
            id,
            docs: BTreeMap::new(),
            applied_seq: 0,
        }
    }

    fn apply(&mut self, entry: &OplogEntry) {
        debug_assert_eq!(entry.seq, self.applied_seq + 1, "oplog applied out of order");
        match &entry.op {
            WriteOp::Put {
                collection,
                key,
                body,
                version,
            } => {
                self.docs.insert(
                    (collection.clone(), key.clone()),
                    StoredDocument {
                        collection: collection.clone(),
                        key: key.clone(),
                        body: Arc::clone(body),
                        version: *version,
                    },
                );
            }
        }
        self.applied_seq = entry.seq;
    }

    fn scan<'a>(&'a self, collection: &'a str) -> impl Iterator<Item = &'a StoredDocument> + 'a {
        self.docs
            .range((collection.to_string(), String::new())..)
            .take_while(move |((c, _), _)| c == collection)
            .map(|(_, d)| d)
    }
}

#[derive(Debug)]
struct Shard {
    index: u32,
    epoch: u64,
    master: Node,
    master_up: bool,
    slaves: Vec<Node>,
    /// Entries not yet applied by every slave, in sequence order.
    oplog: VecDeque<OplogEntry>,
    paused: bool,
    files: Option<ShardFiles>,
    writes_since_snapshot: u64,
}

impl Shard {
    fn fresh(index: u32, slaves: u32) -> Self {
        Self {
            index,
            epoch: 1,
            master: Node::empty(NodeId::new(index, 0)),
            master_up: true,
            slaves: (1..=slaves).map(|n| Node::empty(NodeId::new(index, n))).collect(),
            oplog: VecDeque::new(),
            paused: false,
            files: None,
            writes_since_snapshot: 0,
        }
    }

    fn replica_set(&self) -> ReplicaSet {
        ReplicaSet {
            shard_index: self.index,
            epoch: self.epoch,
            master: self.master.id.clone(),
            slaves: self.slaves.iter().map(|s| s.id.clone()).collect(),
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: persist::FORMAT_VERSION,
            shard_index: self.index,
            epoch: self.epoch,
            seq: self.master.applied_seq,
            master: self.master.id.clone(),
            slaves: self.slaves.iter().map(|s| s.id.clone()).collect(),
            documents: self.master.docs.values().cloned().collect(),
        }
    }

    fn persist_snapshot(&mut self) -> Result<(), StoreError> {
        if self.files.is_some() {
            let snap = self.snapshot();
            self.files.as_mut().unwrap().write_snapshot(&snap)?;
        }
        self.writes_since_snapshot = 0;
        Ok(())
    }

    /// Pending entries for a slave at `applied`, in order.
    fn pending_after(&self, applied: u64) -> impl Iterator<Item = &OplogEntry> {
        let first = self.oplog.front().map_or(applied + 1, |e| e.seq);
        let skip = (applied + 1).saturating_sub(first) as usize;
        self.oplog.iter().skip(skip)
    }

    fn replicate_slave(&mut self, pos: usize, max: u64) -> u64 {
        let applied = self.slaves[pos].applied_seq;
        let batch: Vec<OplogEntry> = self
            .pending_after(applied)
            .take(max.min(usize::MAX as u64) as usize)
            .cloned()
            .collect();
        let slave = &mut self.slaves[pos];
        for e in &batch {
            slave.apply(e);
        }
        debug_assert!(slave.applied_seq <= self.master.applied_seq);
        batch.len() as u64
    }

    fn trim_oplog(&mut self) {
        let floor = self
            .slaves
            .iter()
            .map(|s| s.applied_seq)
            .min()
            .unwrap_or(self.master.applied_seq);
        while self.oplog.front().is_some_and(|e| e.seq <= floor) {
            self.oplog.pop_front();
        }
    }

    fn write(
        &mut self,
        collection: &str,
        key: &str,
        body: Value,
        expected: Option<Option<u64>>,
        snapshot_every: u64,
    ) -> Result<WriteReceipt, StoreError> {
        if !self.master_up {
            return Err(StoreError::NoMaster { shard: self.index });
        }
        let doc_key = (collection.to_string(), key.to_string());
        let current = self.master.docs.get(&doc_key).map(|d| d.version);
        if let Some(expected) = expected {
            if expected != current {
                return Err(StoreError::VersionConflict { expected, current });
            }
        }
        let version = current.unwrap_or(0) + 1;
        let entry = OplogEntry {
            seq: self.master.applied_seq + 1,
            op: WriteOp::Put {
                collection: doc_key.0,
                key: doc_key.1,
                body: Arc::new(body),
                version,
            },
        };
        if let Some(files) = self.files.as_mut() {
            files.append(&entry)?;
        }
        self.master.apply(&entry);
        let receipt = WriteReceipt {
            shard_index: self.index,
            epoch: self.epoch,
            sequence: entry.seq,
            version,
        };
        if !self.slaves.is_empty() {
            self.oplog.push_back(entry);
        }
        self.writes_since_snapshot += 1;
        if self.files.is_some() && self.writes_since_snapshot >= snapshot_every {
            if let Err(e) = self.persist_snapshot() {
                // the write itself is already durable in the log
                tracing::warn!(shard = self.index, error = %e, "snapshot failed");
            }
        }
        Ok(receipt)
    }

    fn read_node(&self, pref: ReadPreference, rr: usize) -> Result<&Node, StoreError> {
        match pref {
            ReadPreference::SlaveOk if !self.slaves.is_empty() => {
                Ok(&self.slaves[rr % self.slaves.len()])
            }
            _ if self.master_up => Ok(&self.master),
            _ => Err(StoreError::NoMaster { shard: self.index }),
        }
    }

    fn status(&self) -> ShardStatus {
        ShardStatus {
            shard_index: self.index,
            epoch: self.epoch,
            master: self.master.id.clone(),
            master_up: self.master_up,
            master_seq: self.master.applied_seq,
            doc_count: self.master.docs.len(),
            replication_paused: self.paused,
            slaves: self
                .slaves
                .iter()
                .map(|s| SlaveStatus {
                    node: s.id.clone(),
                    applied_seq: s.applied_seq,
                    lag: self.master.applied_seq - s.applied_seq,
                    doc_count: s.docs.len(),
                })
                .collect(),
        }
    }
}

/// The storage tier. Cheap to share behind an `Arc`; every method takes
/// `&self`.
#[derive(Debug)]
pub struct ShardedStore {
    map: ShardMap,
    config: StoreConfig,
    shards: Vec<RwLock<Shard>>,
    closed: AtomicBool,
    dir: Option<PathBuf>,
    read_rr: AtomicUsize,
}

impl ShardedStore {
    /// A volatile store, for tests and tooling.
    pub fn in_memory(config: StoreConfig) -> Result<Self, StoreError> {
        let map = ShardMap::new(config.shard_count)?;
        let shards = (0..config.shard_count)
            .map(|i| RwLock::new(Shard::fresh(i, config.slaves_per_shard)))
            .collect();
        Ok(Self {
            map,
            config,
            shards,
            closed: AtomicBool::new(false),
            dir: None,
            read_rr: AtomicUsize::new(0),
        })
    }

    /// Opens (or initializes) a durable store under `dir`, recovering each
    /// shard from its snapshot plus log.
    pub fn open(dir: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let map = ShardMap::new(config.shard_count)?;
        persist::open_meta(&dir, config.shard_count)?;
        let mut shards = Vec::with_capacity(config.shard_count as usize);
        for i in 0..config.shard_count {
            let rec = ShardFiles::open(&dir, i, config.fsync)?;
            let mut shard = Shard::fresh(i, config.slaves_per_shard);
            if let Some(snap) = rec.snapshot {
                let mut base = Node::empty(snap.master.clone());
                for doc in snap.documents {
                    base.docs
                        .insert((doc.collection.clone(), doc.key.clone()), doc);
                }
                base.applied_seq = snap.seq;
                shard.epoch = snap.epoch;
                shard.slaves = snap
                    .slaves
                    .into_iter()
                    .map(|id| Node { id, ..base.clone() })
                    .collect();
                shard.master = base;
            }
            for entry in &rec.tail {
                shard.master.apply(entry);
            }
            shard.writes_since_snapshot = rec.tail.len() as u64;
            if !shard.slaves.is_empty() {
                shard.oplog = rec.tail.into();
            }
            shard.files = Some(rec.files);
            tracing::debug!(
                shard = i,
                seq = shard.master.applied_seq,
                docs = shard.master.docs.len(),
                "shard recovered"
            );
            shards.push(RwLock::new(shard));
        }
        Ok(Self {
            map,
            config,
            shards,
            closed: AtomicBool::new(false),
            dir: Some(dir),
            read_rr: AtomicUsize::new(0),
        })
    }

    pub fn shard_map(&self) -> ShardMap {
        self.map
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    fn check_open(&self) -> Result<(), StoreError> {
        if self.is_closed() {
            Err(StoreError::StoreClosed)
        } else {
            Ok(())
        }
    }

    fn shard(&self, index: u32) -> Result<&RwLock<Shard>, StoreError> {
        self.shards
            .get(index as usize)
            .ok_or(StoreError::UnknownShard(index))
    }

    fn route(&self, collection: &str, key: &str) -> &RwLock<Shard> {
        &self.shards[self.map.shard_of(collection, key) as usize]
    }

    pub fn put(&self, collection: &str, key: &str, body: Value) -> Result<WriteReceipt, StoreError> {
        self.check_open()?;
        self.route(collection, key)
            .write()
            .write(collection, key, body, None, self.config.snapshot_every)
    }

    /// Writes only if the document is currently at `expected` (`None` =
    /// absent). The check and the write are one step on the shard master.
    pub fn put_if_version(
        &self,
        collection: &str,
        key: &str,
        expected: Option<u64>,
        body: Value,
    ) -> Result<WriteReceipt, StoreError> {
        self.check_open()?;
        self.route(collection, key).write().write(
            collection,
            key,
            body,
            Some(expected),
            self.config.snapshot_every,
        )
    }

    /// Inserts unless the key exists. `Ok(None)` means it already existed.
    pub fn insert_if_absent(
        &self,
        collection: &str,
        key: &str,
        body: Value,
    ) -> Result<Option<WriteReceipt>, StoreError> {
        match self.put_if_version(collection, key, None, body) {
            Ok(r) => Ok(Some(r)),
            Err(StoreError::VersionConflict { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get(
        &self,
        collection: &str,
        key: &str,
        pref: ReadPreference,
    ) -> Result<Option<StoredDocument>, StoreError> {
        self.check_open()?;
        let rr = self.read_rr.fetch_add(1, Ordering::Relaxed);
        let shard = self.route(collection, key).read();
        let node = shard.read_node(pref, rr)?;
        Ok(node
            .docs
            .get(&(collection.to_string(), key.to_string()))
            .cloned())
    }

    /// All documents of a collection whose key starts with `prefix`, ordered
    /// by key. Each shard answers from one node under one read lock.
    pub fn scan_prefix(
        &self,
        collection: &str,
        prefix: &str,
        pref: ReadPreference,
    ) -> Result<Vec<StoredDocument>, StoreError> {
        self.check_open()?;
        let rr = self.read_rr.fetch_add(1, Ordering::Relaxed);
        let mut out = Vec::new();
        for lock in &self.shards {
            let shard = lock.read();
            let node = shard.read_node(pref, rr)?;
            out.extend(
                node.scan(collection)
                    .filter(|d| d.key.starts_with(prefix))
                    .cloned(),
            );
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }

    pub fn scan(
        &self,
        collection: &str,
        pref: ReadPreference,
    ) -> Result<Vec<StoredDocument>, StoreError> {
        self.scan_prefix(collection, "", pref)
    }

    /// Every document on every shard master, for audits.
    pub fn scan_all(&self) -> Result<Vec<StoredDocument>, StoreError> {
        self.check_open()?;
        let mut out = Vec::new();
        for lock in &self.shards {
            out.extend(lock.read().master.docs.values().cloned());
        }
        Ok(out)
    }

    /// Brings every slave of the shard up to the master. Returns the number
    /// of oplog entries shipped (per slave, not summed).
    pub fn replicate_step(&self, shard_index: u32) -> Result<u64, StoreError> {
        self.check_open()?;
        let mut shard = self.shard(shard_index)?.write();
        if !shard.master_up {
            return Err(StoreError::NoMaster { shard: shard_index });
        }
        let mut shipped = 0;
        for pos in 0..shard.slaves.len() {
            shipped = shipped.max(shard.replicate_slave(pos, u64::MAX));
        }
        shard.trim_oplog();
        Ok(shipped)
    }

    /// Applies at most `max_entries` pending entries to one slave.
    pub fn replicate_slave_step(
        &self,
        shard_index: u32,
        slave_position: usize,
        max_entries: u64,
    ) -> Result<u64, StoreError> {
        self.check_open()?;
        let mut shard = self.shard(shard_index)?.write();
        if !shard.master_up {
            return Err(StoreError::NoMaster { shard: shard_index });
        }
        if slave_position >= shard.slaves.len() {
            return Err(StoreError::NodeNotSlave {
                shard: shard_index,
                node: NodeId(format!("#{slave_position}")),
            });
        }
        let n = shard.replicate_slave(slave_position, max_entries);
        shard.trim_oplog();
        Ok(n)
    }

    /// One replication round over every shard whose master is up and whose
    /// replication is not paused. This is what the service timer calls.
    pub fn replicate_all(&self) -> Result<u64, StoreError> {
        let mut total = 0;
        for i in 0..self.map.shard_count {
            let skip = {
                let s = self.shard(i)?.read();
                s.paused || !s.master_up
            };
            if !skip {
                total += self.replicate_step(i)?;
            }
        }
        Ok(total)
    }

    /// Steps every reachable shard until nothing is left to ship.
    pub fn replicate_until_quiet(&self) -> Result<(), StoreError> {
        for i in 0..self.map.shard_count {
            if self.shard(i)?.read().master_up {
                while self.replicate_step(i)? > 0 {}
            }
        }
        Ok(())
    }

    /// Pauses or resumes timer-driven replication of one shard. Explicit
    /// [`replicate_step`](Self::replicate_step) calls are unaffected.
    pub fn set_replication_paused(&self, shard_index: u32, paused: bool) -> Result<(), StoreError> {
        self.shard(shard_index)?.write().paused = paused;
        Ok(())
    }

    /// Marks the master reachable or not. While down, writes and master
    /// reads fail with `NoMaster`; slave reads keep working.
    pub fn set_master_up(&self, shard_index: u32, up: bool) -> Result<(), StoreError> {
        self.shard(shard_index)?.write().master_up = up;
        Ok(())
    }

    pub fn replica_set(&self, shard_index: u32) -> Result<ReplicaSet, StoreError> {
        Ok(self.shard(shard_index)?.read().replica_set())
    }

    /// Retained oplog entries of a shard (those some slave still lacks).
    pub fn pending_oplog(&self, shard_index: u32) -> Result<Vec<OplogEntry>, StoreError> {
        Ok(self.shard(shard_index)?.read().oplog.iter().cloned().collect())
    }

    /// Makes `node` the master of a shard whose master is down. The
    /// remaining slaves are resynchronized from the new master and the
    /// shard's epoch advances.
    pub fn promote_slave(&self, shard_index: u32, node: &NodeId) -> Result<Promotion, StoreError> {
        self.check_open()?;
        let mut shard = self.shard(shard_index)?.write();
        if shard.master_up {
            return Err(StoreError::MasterStillUp { shard: shard_index });
        }
        let pos = shard
            .slaves
            .iter()
            .position(|s| &s.id == node)
            .ok_or_else(|| StoreError::NodeNotSlave {
                shard: shard_index,
                node: node.clone(),
            })?;
        let new_master = shard.slaves.remove(pos);
        let lost_writes = shard.master.applied_seq - new_master.applied_seq;
        for slave in &mut shard.slaves {
            *slave = Node {
                id: slave.id.clone(),
                ..new_master.clone()
            };
        }
        shard.master = new_master;
        shard.master_up = true;
        shard.epoch += 1;
        shard.oplog.clear();
        shard.persist_snapshot()?;
        tracing::info!(
            shard = shard_index,
            master = %shard.master.id,
            epoch = shard.epoch,
            lost_writes,
            "slave promoted"
        );
        Ok(Promotion {
            replica_set: shard.replica_set(),
            lost_writes,
        })
    }

    /// Adds a new slave seeded with a full copy of the master.
    pub fn add_slave(&self, shard_index: u32) -> Result<NodeId, StoreError> {
        self.check_open()?;
        let mut shard = self.shard(shard_index)?.write();
        let next = shard
            .slaves
            .iter()
            .map(|s| s.id.ordinal())
            .chain(std::iter::once(shard.master.id.ordinal()))
            .max()
            .unwrap_or(0)
            + 1;
        let id = NodeId::new(shard_index, next);
        let node = Node {
            id: id.clone(),
            ..shard.master.clone()
        };
        shard.slaves.push(node);
        shard.persist_snapshot()?;
        Ok(id)
    }

    /// Full contents of one node (master or slave) with its applied
    /// sequence, for inspection and verification.
    pub fn node_contents(
        &self,
        shard_index: u32,
        node: &NodeId,
    ) -> Result<(u64, Vec<StoredDocument>), StoreError> {
        let shard = self.shard(shard_index)?.read();
        let n = std::iter::once(&shard.master)
            .chain(shard.slaves.iter())
            .find(|n| &n.id == node)
            .ok_or_else(|| StoreError::NodeNotSlave {
                shard: shard_index,
                node: node.clone(),
            })?;
        Ok((n.applied_seq, n.docs.values().cloned().collect()))
    }

    pub fn shard_status(&self) -> Vec<ShardStatus> {
        self.shards.iter().map(|s| s.read().status()).collect()
    }

    /// Snapshots every shard now.
    pub fn checkpoint(&self) -> Result<(), StoreError> {
        self.check_open()?;
        for lock in &self.shards {
            lock.write().persist_snapshot()?;
        }
        Ok(())
    }

    /// Snapshots durable shards and refuses further operations.
    pub fn close(&self) -> Result<(), StoreError> {
        if self.closed.swap(true, Ordering::AcqRel) {
            return Ok(());
        }
        for lock in &self.shards {
            lock.write().persist_snapshot()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn store() -> ShardedStore {
        ShardedStore::in_memory(StoreConfig::default()).unwrap()
    }

    /// A key that lands on `shard` in a 3-shard store.
    fn key_on(shard: u32, tag: &str) -> String {
        (0..)
            .map(|i| format!("{tag}{i}"))
            .find(|k| shard_for_key(&routing_key("c", k), 3).unwrap() == shard)
            .unwrap()
    }

    #[test]
    fn read_after_write_and_versions() {
        let s = store();
        let r1 = s.put("c", "k", json!({"v": 1})).unwrap();
        let r2 = s.put("c", "k", json!({"v": 2})).unwrap();
        assert_eq!((r1.version, r2.version), (1, 2));
        assert!(r2.sequence > r1.sequence);
        let doc = s.get("c", "k", ReadPreference::Master).unwrap().unwrap();
        assert_eq!(*doc.body, json!({"v": 2}));
        assert_eq!(s.get("c", "nope", ReadPreference::Master).unwrap(), None);
    }

    #[test]
    fn slave_reads_lag_until_replicated() {
        let s = store();
        let k = key_on(0, "k");
        s.put("c", &k, json!(1)).unwrap();
        s.replicate_until_quiet().unwrap();
        s.put("c", &k, json!(2)).unwrap();
        let slave = s.get("c", &k, ReadPreference::SlaveOk).unwrap().unwrap();
        assert_eq!(slave.version, 1);
        let master = s.get("c", &k, ReadPreference::Master).unwrap().unwrap();
        assert_eq!(master.version, 2);
        assert_eq!(s.replicate_step(0).unwrap(), 1);
        assert_eq!(s.replicate_step(0).unwrap(), 0);
        for _ in 0..4 {
            let d = s.get("c", &k, ReadPreference::SlaveOk).unwrap().unwrap();
            assert_eq!(d.version, 2);
        }
    }

    #[test]
    fn full_drain_counts_entries_not_slaves() {
        let s = store();
        for i in 0..5 {
            s.put("c", &key_on(1, &format!("x{i}-")), json!(i)).unwrap();
        }
        assert_eq!(s.replicate_step(1).unwrap(), 5);
        let st = &s.shard_status()[1];
        assert!(st.slaves.iter().all(|sl| sl.applied_seq == st.master_seq && sl.lag == 0));
        assert!(s.pending_oplog(1).unwrap().is_empty());
        assert_eq!(s.replicate_step(7), Err(StoreError::UnknownShard(7)));
    }

    #[test]
    fn failover_counts_lost_tail() {
        let s = store();
        let keys: Vec<_> = (0..5).map(|i| key_on(2, &format!("f{i}-"))).collect();
        for k in &keys[..2] {
            s.put("c", k, json!("early")).unwrap();
        }
        s.replicate_step(2).unwrap();
        for k in &keys[2..] {
            s.put("c", k, json!("tail")).unwrap();
        }
        let slave = s.replica_set(2).unwrap().slaves[0].clone();
        assert_eq!(
            s.promote_slave(2, &slave),
            Err(StoreError::MasterStillUp { shard: 2 })
        );
        s.set_master_up(2, false).unwrap();
        assert_eq!(
            s.put("c", &keys[0], json!(0)),
            Err(StoreError::NoMaster { shard: 2 })
        );
        assert_eq!(
            s.promote_slave(2, &NodeId("bogus".into())),
            Err(StoreError::NodeNotSlave {
                shard: 2,
                node: NodeId("bogus".into())
            })
        );
        let p = s.promote_slave(2, &slave).unwrap();
        assert_eq!(p.lost_writes, 3);
        assert_eq!(p.replica_set.master, slave);
        assert_eq!(p.replica_set.epoch, 2);
        assert_eq!(p.replica_set.slaves.len(), 1);
        assert!(s.get("c", &keys[4], ReadPreference::Master).unwrap().is_none());
        let r = s.put("c", &keys[4], json!("after")).unwrap();
        assert_eq!((r.epoch, r.sequence), (2, 3));
        let added = s.add_slave(2).unwrap();
        assert_eq!(s.replica_set(2).unwrap().slaves.last(), Some(&added));
    }

    #[test]
    fn fully_replicated_failover_loses_nothing() {
        let s = store();
        for i in 0..4 {
            s.put("c", &key_on(0, &format!("z{i}-")), json!(i)).unwrap();
        }
        s.replicate_until_quiet().unwrap();
        s.set_master_up(0, false).unwrap();
        let slave = s.replica_set(0).unwrap().slaves[1].clone();
        assert_eq!(s.promote_slave(0, &slave).unwrap().lost_writes, 0);
    }

    #[test]
    fn conditional_writes() {
        let s = store();
        assert!(s.insert_if_absent("c", "k", json!(1)).unwrap().is_some());
        assert!(s.insert_if_absent("c", "k", json!(2)).unwrap().is_none());
        assert_eq!(
            s.put_if_version("c", "k", Some(5), json!(3)),
            Err(StoreError::VersionConflict {
                expected: Some(5),
                current: Some(1)
            })
        );
        assert_eq!(s.put_if_version("c", "k", Some(1), json!(3)).unwrap().version, 2);
    }

    #[test]
    fn status_of_fresh_store() {
        let st = store().shard_status();
        assert_eq!(st.len(), 3);
        for (i, s) in st.iter().enumerate() {
            assert_eq!(s.shard_index, i as u32);
            assert_eq!(s.master_seq, 0);
            assert_eq!(s.slaves.len(), 2);
            assert!(s.slaves.iter().all(|sl| sl.applied_seq == 0));
        }
    }

    #[test]
    fn closed_store_refuses_everything() {
        let s = store();
        s.close().unwrap();
        assert_eq!(s.put("c", "k", json!(1)), Err(StoreError::StoreClosed));
        assert_eq!(s.get("c", "k", ReadPreference::Master), Err(StoreError::StoreClosed));
    }

    #[test]
    fn no_slaves_reads_master() {
        let s = ShardedStore::in_memory(StoreConfig {
            slaves_per_shard: 0,
            ..StoreConfig::default()
        })
        .unwrap();
        s.put("c", "k", json!(1)).unwrap();
        assert!(s.get("c", "k", ReadPreference::SlaveOk).unwrap().is_some());
        assert_eq!(s.replicate_step(0).unwrap(), 0);
    }

    #[test]
    fn durable_store_recovers_after_drop() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StoreConfig {
            snapshot_every: 7,
            fsync: false,
            ..StoreConfig::default()
        };
        {
            let s = ShardedStore::open(dir.path(), cfg.clone()).unwrap();
            for i in 0..50 {
                s.put("c", &format!("k{i}"), json!(i)).unwrap();
            }
            s.put("c", "k3", json!("again")).unwrap();
            // dropped without close: the log is the only record of the tail
        }
        let s = ShardedStore::open(dir.path(), cfg.clone()).unwrap();
        let docs = s.scan("c", ReadPreference::Master).unwrap();
        assert_eq!(docs.len(), 50);
        let k3 = s.get("c", "k3", ReadPreference::Master).unwrap().unwrap();
        assert_eq!((k3.version, (*k3.body).clone()), (2, json!("again")));
        s.replicate_until_quiet().unwrap();
        assert_eq!(s.scan("c", ReadPreference::SlaveOk).unwrap().len(), 50);
        s.close().unwrap();
        let s = ShardedStore::open(dir.path(), cfg).unwrap();
        assert_eq!(s.scan("c", ReadPreference::Master).unwrap().len(), 50);
    }

    #[test]
    fn promotion_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StoreConfig {
            fsync: false,
            ..StoreConfig::default()
        };
        let promoted = {
            let s = ShardedStore::open(dir.path(), cfg.clone()).unwrap();
            let k = key_on(0, "p");
            s.put("c", &k, json!(1)).unwrap();
            s.replicate_step(0).unwrap();
            s.put("c", &key_on(0, "q"), json!(2)).unwrap();
            s.set_master_up(0, false).unwrap();
            let slave = s.replica_set(0).unwrap().slaves[0].clone();
            assert_eq!(s.promote_slave(0, &slave).unwrap().lost_writes, 1);
            slave
        };
        let s = ShardedStore::open(dir.path(), cfg).unwrap();
        let rs = s.replica_set(0).unwrap();
        assert_eq!((rs.master, rs.epoch), (promoted, 2));
        assert_eq!(s.shard_status()[0].doc_count, 1);
    }
}
