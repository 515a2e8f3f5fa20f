//! Per-executor object cache with byte-capacity accounting and pluggable
//! eviction (Random, FIFO, LRU, LFU).

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ObjectId;
use crate::units::GB;
use crate::workload::DataObject;

/// Simulated local disk available to each executor cache.
pub const DEFAULT_CAPACITY: u64 = 50 * GB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EvictionPolicy {
    Random { seed: u64 },
    Fifo,
    Lru,
    Lfu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Bytes of working size the cache may hold.
    pub capacity: u64,
    pub policy: EvictionPolicy,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            capacity: DEFAULT_CAPACITY,
            policy: EvictionPolicy::Lru,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("object {object} ({size} bytes) exceeds cache capacity of {capacity} bytes")]
    Oversized {
        object: ObjectId,
        size: u64,
        capacity: u64,
    },
    #[error("object {0} is already cached")]
    Duplicate(ObjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheEntry {
    pub working_size: u64,
    pub insert_seq: u64,
    pub last_access_seq: u64,
    /// The access that brought the object in counts as the first.
    pub access_count: u64,
}

/// Eviction order key. The smallest key is the next victim.
type OrderKey = (u64, u64, ObjectId);

#[derive(Debug, Clone)]
pub struct Cache {
    config: CacheConfig,
    entries: BTreeMap<ObjectId, CacheEntry>,
    order: BTreeSet<OrderKey>,
    used: u64,
    seq: u64,
    rng: Option<ChaCha8Rng>,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Self {
        let rng = match config.policy {
            EvictionPolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Cache {
            config,
            entries: BTreeMap::new(),
            order: BTreeSet::new(),
            used: 0,
            seq: 0,
            rng,
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn capacity(&self) -> u64 {
        self.config.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Residency test without touching recency or frequency state.
    pub fn contains(&self, id: ObjectId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn entry(&self, id: ObjectId) -> Option<&CacheEntry> {
        self.entries.get(&id)
    }

    /// Resident object ids in ascending order.
    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.entries.keys().copied()
    }

    /// Resident ids, most recently accessed first.
    pub fn recency_order(&self) -> Vec<ObjectId> {
        let mut ids: Vec<_> = self
            .entries
            .iter()
            .map(|(&id, e)| (e.last_access_seq, id))
            .collect();
        ids.sort_unstable_by(|a, b| b.cmp(a));
        ids.into_iter().map(|(_, id)| id).collect()
    }

    /// A hit counts as an access for both recency and frequency.
    pub fn lookup(&mut self, id: ObjectId) -> Lookup {
        let Some(entry) = self.entries.get(&id).copied() else {
            return Lookup::Miss;
        };
        self.seq += 1;
        let updated = CacheEntry {
            last_access_seq: self.seq,
            access_count: entry.access_count + 1,
            ..entry
        };
        self.reorder(id, &entry, &updated);
        self.entries.insert(id, updated);
        Lookup::Hit
    }

    /// Makes `obj` resident, evicting victims one at a time until it fits.
    /// Returns the evicted ids in eviction order.
    pub fn insert(&mut self, obj: &DataObject) -> Result<Vec<ObjectId>, CacheError> {
        if obj.working_size > self.config.capacity {
            return Err(CacheError::Oversized {
                object: obj.id,
                size: obj.working_size,
                capacity: self.config.capacity,
            });
        }
        if self.entries.contains_key(&obj.id) {
            return Err(CacheError::Duplicate(obj.id));
        }
        let mut evicted = Vec::new();
        while self.used + obj.working_size > self.config.capacity {
            let victim = self.victim().expect("non-empty cache while over capacity");
            self.remove(victim);
            evicted.push(victim);
        }
        self.seq += 1;
        let entry = CacheEntry {
            working_size: obj.working_size,
            insert_seq: self.seq,
            last_access_seq: self.seq,
            access_count: 1,
        };
        if let Some(key) = self.key(obj.id, &entry) {
            self.order.insert(key);
        }
        self.entries.insert(obj.id, entry);
        self.used += obj.working_size;
        debug_assert!(self.used <= self.config.capacity);
        Ok(evicted)
    }

    pub fn remove(&mut self, id: ObjectId) -> Option<CacheEntry> {
        let entry = self.entries.remove(&id)?;
        if let Some(key) = self.key(id, &entry) {
            self.order.remove(&key);
        }
        self.used -= entry.working_size;
        Some(entry)
    }

    /// Empties the cache, returning the ids that were resident.
    pub fn clear(&mut self) -> Vec<ObjectId> {
        let ids: Vec<_> = self.entries.keys().copied().collect();
        self.entries.clear();
        self.order.clear();
        self.used = 0;
        ids
    }

    fn victim(&mut self) -> Option<ObjectId> {
        match self.config.policy {
            EvictionPolicy::Random { .. } => {
                if self.entries.is_empty() {
                    return None;
                }
                let rng = self.rng.as_mut().expect("random policy has an rng");
                let n = rng.gen_range(0..self.entries.len());
                self.entries.keys().nth(n).copied()
            }
            _ => self.order.first().map(|&(_, _, id)| id),
        }
    }

    fn key(&self, id: ObjectId, e: &CacheEntry) -> Option<OrderKey> {
        match self.config.policy {
            EvictionPolicy::Random { .. } => None,
            EvictionPolicy::Fifo => Some((e.insert_seq, 0, id)),
            EvictionPolicy::Lru => Some((e.last_access_seq, 0, id)),
            // ties on frequency fall back to recency
            EvictionPolicy::Lfu => Some((e.access_count, e.last_access_seq, id)),
        }
    }

    fn reorder(&mut self, id: ObjectId, old: &CacheEntry, new: &CacheEntry) {
        if let (Some(a), Some(b)) = (self.key(id, old), self.key(id, new)) {
            if a != b {
                self.order.remove(&a);
                self.order.insert(b);
            }
        }
    }
}
