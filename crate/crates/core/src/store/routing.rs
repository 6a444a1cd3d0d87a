//! Key to shard assignment.

use serde::{Deserialize, Serialize};

use super::StoreError;

pub const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
pub const FNV_PRIME: u64 = 1_099_511_628_211;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// The string hashed for a document: `collection + "/" + key`.
pub fn routing_key(collection: &str, key: &str) -> String {
    format!("{collection}/{key}")
}

pub fn shard_for_key(key: &str, shard_count: u32) -> Result<u32, StoreError> {
    if shard_count == 0 {
        return Err(StoreError::ZeroShards);
    }
    Ok((fnv1a64(key.as_bytes()) % u64::from(shard_count)) as u32)
}

/// Routing state. The shard count is fixed for the lifetime of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardMap {
    pub shard_count: u32,
    pub epoch: u64,
}

impl ShardMap {
    pub fn new(shard_count: u32) -> Result<Self, StoreError> {
        if shard_count == 0 {
            return Err(StoreError::ZeroShards);
        }
        Ok(Self {
            shard_count,
            epoch: 1,
        })
    }

    pub fn shard_of(&self, collection: &str, key: &str) -> u32 {
        (fnv1a64(routing_key(collection, key).as_bytes()) % u64::from(self.shard_count)) as u32
    }
}
