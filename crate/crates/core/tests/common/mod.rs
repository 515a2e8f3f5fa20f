//! Reference implementations shared by the integration tests and the
//! acceptance suite. Each one is written independently of the library code
//! it checks: plain vectors and linear scans, no shared helpers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use diffuse_core::cache::{Cache, CacheConfig, EvictionPolicy, Lookup};
use diffuse_core::index::LocationIndex;
use diffuse_core::scheduler::{DispatchDecision, DispatchPolicy, PoolView, Scheduler, SchedulerConfig, WaitQueue};
use diffuse_core::workload::{DataObject, Task};
use diffuse_core::{ExecutorId, ObjectId, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePolicy {
    Fifo,
    Lru,
    Lfu,
}

#[derive(Debug, Clone)]
struct Slot {
    id: ObjectId,
    size: u64,
    inserted: u64,
    last: u64,
    count: u64,
}

/// Brute-force cache: a flat list scanned for the victim on every eviction.
#[derive(Debug, Clone)]
pub struct OracleCache {
    policy: OraclePolicy,
    capacity: u64,
    slots: Vec<Slot>,
    clock: u64,
}

impl OracleCache {
    pub fn new(policy: OraclePolicy, capacity: u64) -> Self {
        OracleCache {
            policy,
            capacity,
            slots: Vec::new(),
            clock: 0,
        }
    }

    pub fn used(&self) -> u64 {
        self.slots.iter().map(|s| s.size).sum()
    }

    pub fn resident(&self) -> BTreeSet<ObjectId> {
        self.slots.iter().map(|s| s.id).collect()
    }

    /// Returns `(hit, evicted)`; a miss inserts the object.
    pub fn access(&mut self, id: ObjectId, size: u64) -> (bool, Vec<ObjectId>) {
        self.clock += 1;
        if let Some(s) = self.slots.iter_mut().find(|s| s.id == id) {
            s.last = self.clock;
            s.count += 1;
            return (true, Vec::new());
        }
        let mut evicted = Vec::new();
        while self.used() + size > self.capacity {
            let mut best = 0;
            for i in 1..self.slots.len() {
                let (a, b) = (&self.slots[i], &self.slots[best]);
                let better = match self.policy {
                    OraclePolicy::Fifo => a.inserted < b.inserted,
                    OraclePolicy::Lru => a.last < b.last,
                    OraclePolicy::Lfu => a.count < b.count || (a.count == b.count && a.last < b.last),
                };
                if better {
                    best = i;
                }
            }
            evicted.push(self.slots.remove(best).id);
        }
        self.slots.push(Slot {
            id,
            size,
            inserted: self.clock,
            last: self.clock,
            count: 1,
        });
        (false, evicted)
    }
}

/// Replays `trace` (object ids into `sizes`) through the library cache,
/// inserting on every miss.
pub fn replay_library(policy: EvictionPolicy, capacity: u64, sizes: &[u64], trace: &[usize]) -> Vec<(bool, Vec<ObjectId>)> {
    let mut cache = Cache::new(CacheConfig { capacity, policy });
    trace
        .iter()
        .map(|&i| {
            let id = ObjectId(i as u32);
            if cache.lookup(id) == Lookup::Hit {
                (true, Vec::new())
            } else {
                let obj = DataObject {
                    id,
                    transfer_size: sizes[i],
                    working_size: sizes[i],
                };
                let ev = cache.insert(&obj).expect("objects fit");
                assert!(cache.used() <= capacity);
                (false, ev)
            }
        })
        .collect()
}

pub fn replay_oracle(policy: OraclePolicy, capacity: u64, sizes: &[u64], trace: &[usize]) -> Vec<(bool, Vec<ObjectId>)> {
    let mut cache = OracleCache::new(policy, capacity);
    trace
        .iter()
        .map(|&i| cache.access(ObjectId(i as u32), sizes[i]))
        .collect()
}

/// Overlap of each executor's indexed contents with `required`, counted
/// directly from a snapshot.
pub fn overlap_oracle(snapshot: &BTreeMap<ObjectId, Vec<ExecutorId>>, required: &[ObjectId], e: ExecutorId) -> u64 {
    required
        .iter()
        .filter(|o| snapshot.get(o).is_some_and(|v| v.contains(&e)))
        .count() as u64
}

/// A random placement of up to `objects` objects over `executors`
/// executors, installed synchronously.
pub fn random_index(rng: &mut ChaCha8Rng, objects: u32, executors: u32) -> LocationIndex {
    let mut index = LocationIndex::new(0.0);
    for o in 0..objects {
        for e in 0..executors {
            if rng.gen_bool(0.3) {
                index.add_location(ObjectId(o), ExecutorId(e));
            }
        }
    }
    index
}

pub fn random_task(rng: &mut ChaCha8Rng, id: u32, objects: u32) -> Task {
    let n = rng.gen_range(1..=3.min(objects as usize));
    let mut req: Vec<ObjectId> = Vec::new();
    while req.len() < n {
        let o = ObjectId(rng.gen_range(0..objects));
        if !req.contains(&o) {
            req.push(o);
        }
    }
    Task {
        id: TaskId(id),
        required_objects: req,
        compute_time: 0.1,
    }
}

pub struct PolicyCase {
    pub decisions: Vec<DispatchDecision>,
    pub queue_before: Vec<Task>,
    pub queue_after: WaitQueue,
    pub ready: BTreeSet<ExecutorId>,
    pub idle: BTreeSet<ExecutorId>,
    pub snapshot: BTreeMap<ObjectId, Vec<ExecutorId>>,
}

/// One scheduling round over a random pool, queue and index.
pub fn random_round(policy: DispatchPolicy, seed: u64) -> PolicyCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = rng.gen_range(1..=20u32);
    let executors = rng.gen_range(1..=8u32);
    let index = random_index(&mut rng, objects, executors);
    let ready: BTreeSet<ExecutorId> = (0..executors).map(ExecutorId).collect();
    let idle: BTreeSet<ExecutorId> = ready.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    let tasks: Vec<Task> = (0..rng.gen_range(1..=10u32)).map(|i| random_task(&mut rng, i, objects)).collect();
    let mut queue = WaitQueue::new();
    for t in &tasks {
        queue.enqueue(t);
    }
    let decisions = Scheduler::new(SchedulerConfig::new(policy))
        .select(
            &mut queue,
            PoolView {
                ready: &ready,
                idle: &idle,
            },
            &index,
            &|_| 1,
        )
        .expect("consistent pool");
    PolicyCase {
        decisions,
        queue_before: tasks,
        queue_after: queue,
        ready,
        idle,
        snapshot: index.snapshot(),
    }
}
