//! The dispatcher's centralized location index.
//!
//! Executors report cache changes as add/remove records queued per executor.
//! Queues are drained in batches every `update_interval` of simulated time, so
//! the index is loosely coherent with the caches. An interval of zero means
//! every record is applied as soon as it is recorded.

mod microbench;
mod prls;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::hash::BuildHasherDefault;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use microbench::{index_microbench, index_microbench_concurrent, MicrobenchReport};
pub use prls::{PrlsModel, REPORTED_LATENCY_AT_1M_NODES_MS};

use crate::ids::{ExecutorId, ObjectId};

/// Fixed-key SipHash so iteration order never varies between runs.
pub(crate) type FixedState = BuildHasherDefault<DefaultHasher>;

/// Sorted, duplicate-free executor ids.
pub type Locations = SmallVec<[ExecutorId; 4]>;

/// Default batch period in simulated seconds.
pub const DEFAULT_UPDATE_INTERVAL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexUpdate {
    Add(ObjectId),
    Remove(ObjectId),
}

#[derive(Debug, Clone)]
pub struct LocationIndex {
    locations: HashMap<ObjectId, Locations, FixedState>,
    by_executor: HashMap<ExecutorId, HashSet<ObjectId, FixedState>, FixedState>,
    pending: BTreeMap<ExecutorId, VecDeque<IndexUpdate>>,
    update_interval: f64,
}

static NOWHERE: [ExecutorId; 0] = [];

impl LocationIndex {
    pub fn new(update_interval: f64) -> Self {
        LocationIndex {
            locations: HashMap::default(),
            by_executor: HashMap::default(),
            pending: BTreeMap::new(),
            update_interval: update_interval.max(0.0),
        }
    }

    pub fn with_capacity(update_interval: f64, entries: usize) -> Self {
        let mut idx = Self::new(update_interval);
        idx.locations.reserve(entries);
        idx
    }

    pub fn update_interval(&self) -> f64 {
        self.update_interval
    }

    pub fn is_synchronous(&self) -> bool {
        self.update_interval == 0.0
    }

    /// Executors believed to cache `id`. Empty means persistent storage.
    pub fn locate(&self, id: ObjectId) -> &[ExecutorId] {
        self.locations.get(&id).map_or(&NOWHERE[..], |l| l.as_slice())
    }

    /// Number of objects with at least one known location.
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Queues a record without applying it.
    pub fn enqueue(&mut self, executor: ExecutorId, update: IndexUpdate) {
        self.pending.entry(executor).or_default().push_back(update);
    }

    /// Queues a record, applying it at once in synchronous mode.
    pub fn record(&mut self, executor: ExecutorId, update: IndexUpdate) {
        if self.is_synchronous() {
            self.apply(executor, update);
        } else {
            self.enqueue(executor, update);
        }
    }

    pub fn pending_len(&self, executor: ExecutorId) -> usize {
        self.pending.get(&executor).map_or(0, VecDeque::len)
    }

    pub fn has_pending(&self) -> bool {
        self.pending.values().any(|q| !q.is_empty())
    }

    /// Drains one executor's queue in order. Returns the number of records.
    pub fn apply_updates(&mut self, executor: ExecutorId) -> usize {
        let Some(queue) = self.pending.remove(&executor) else {
            return 0;
        };
        let n = queue.len();
        for update in queue {
            self.apply(executor, update);
        }
        n
    }

    /// Drains every queue, lowest executor id first.
    pub fn apply_all(&mut self) -> usize {
        let executors: Vec<_> = self.pending.keys().copied().collect();
        executors.into_iter().map(|e| self.apply_updates(e)).sum()
    }

    /// Drops an executor's queue and removes it from every location set.
    pub fn deregister(&mut self, executor: ExecutorId) -> usize {
        self.pending.remove(&executor);
        let Some(objects) = self.by_executor.remove(&executor) else {
            return 0;
        };
        for obj in &objects {
            self.detach(*obj, executor);
        }
        objects.len()
    }

    pub fn add_location(&mut self, id: ObjectId, executor: ExecutorId) {
        let locs = self.locations.entry(id).or_default();
        if let Err(pos) = locs.binary_search(&executor) {
            locs.insert(pos, executor);
            self.by_executor.entry(executor).or_default().insert(id);
        }
    }

    pub fn remove_location(&mut self, id: ObjectId, executor: ExecutorId) {
        if let Some(set) = self.by_executor.get_mut(&executor) {
            if set.remove(&id) {
                self.detach(id, executor);
            }
        }
    }

    /// Objects the index attributes to `executor`, ascending.
    pub fn objects_at(&self, executor: ExecutorId) -> Vec<ObjectId> {
        let mut v: Vec<_> = self
            .by_executor
            .get(&executor)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        v.sort_unstable();
        v
    }

    /// Sorted copy of all location sets.
    pub fn snapshot(&self) -> BTreeMap<ObjectId, Vec<ExecutorId>> {
        self.locations
            .iter()
            .map(|(&id, l)| (id, l.to_vec()))
            .collect()
    }

    /// Rough heap footprint of the object map divided by its entry count.
    pub fn approx_bytes_per_entry(&self) -> f64 {
        if self.locations.is_empty() {
            return 0.0;
        }
        let slot = std::mem::size_of::<(ObjectId, Locations)>() + 1;
        let spilled: usize = self
            .locations
            .values()
            .filter(|l| l.spilled())
            .map(|l| l.capacity() * std::mem::size_of::<ExecutorId>())
            .sum();
        (self.locations.capacity() * slot + spilled) as f64 / self.locations.len() as f64
    }

    fn apply(&mut self, executor: ExecutorId, update: IndexUpdate) {
        match update {
            IndexUpdate::Add(id) => self.add_location(id, executor),
            IndexUpdate::Remove(id) => self.remove_location(id, executor),
        }
    }

    fn detach(&mut self, id: ObjectId, executor: ExecutorId) {
        if let Some(locs) = self.locations.get_mut(&id) {
            if let Ok(pos) = locs.binary_search(&executor) {
                locs.remove(pos);
            }
            if locs.is_empty() {
                self.locations.remove(&id);
            }
        }
    }
}

impl Default for LocationIndex {
    fn default() -> Self {
        LocationIndex::new(DEFAULT_UPDATE_INTERVAL)
    }
}
