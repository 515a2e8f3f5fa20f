//! The dispatcher: a FIFO wait queue and the four dispatch policies.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ExecutorId, ObjectId, TaskId};
use crate::index::LocationIndex;
use crate::workload::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchPolicy {
    /// Lowest-id idle executor; no location hints, no caching.
    FirstAvailable,
    /// Lowest-id idle executor, with location hints.
    FirstCacheAvailable,
    /// Executor caching the most inputs, waiting for it if it is busy.
    MaxCacheHit,
    /// Idle executor caching the most inputs.
    MaxComputeUtil,
}

impl DispatchPolicy {
    pub const ALL: [DispatchPolicy; 4] = [
        DispatchPolicy::FirstAvailable,
        DispatchPolicy::FirstCacheAvailable,
        DispatchPolicy::MaxCacheHit,
        DispatchPolicy::MaxComputeUtil,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DispatchPolicy::FirstAvailable => "first-available",
            DispatchPolicy::FirstCacheAvailable => "first-cache-available",
            DispatchPolicy::MaxCacheHit => "max-cache-hit",
            DispatchPolicy::MaxComputeUtil => "max-compute-util",
        }
    }

    /// Whether executors consult caches and location hints under this policy.
    pub fn is_data_aware(self) -> bool {
        self != DispatchPolicy::FirstAvailable
    }
}

impl fmt::Display for DispatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DispatchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DispatchPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown dispatch policy `{s}`")))
    }
}

/// How overlap between a task and an executor cache is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Number of required objects cached.
    #[default]
    Count,
    /// Sum of working sizes of the required objects cached.
    Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub policy: DispatchPolicy,
    pub score: ScoreMode,
    /// Rounds a max-cache-hit task may wait for its preferred executor before
    /// it is placed max-compute-util style. `None` waits indefinitely.
    pub max_defer: Option<u32>,
}

impl SchedulerConfig {
    pub fn new(policy: DispatchPolicy) -> Self {
        SchedulerConfig {
            policy,
            score: ScoreMode::Count,
            max_defer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedTask {
    pub id: TaskId,
    pub required: Vec<ObjectId>,
    pub deferrals: u32,
}

/// FIFO wait queue with arrival and dispatch counters.
#[derive(Debug, Clone, Default)]
pub struct WaitQueue {
    tasks: VecDeque<QueuedTask>,
    enqueued: u64,
    dispatched: u64,
}

impl WaitQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a task and returns the new queue length.
    pub fn enqueue(&mut self, task: &Task) -> usize {
        self.tasks.push_back(QueuedTask {
            id: task.id,
            required: task.required_objects.clone(),
            deferrals: 0,
        });
        self.enqueued += 1;
        self.tasks.len()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueuedTask> {
        self.tasks.iter()
    }

    fn take(&mut self, pos: usize) -> QueuedTask {
        self.dispatched += 1;
        self.tasks.remove(pos).expect("position within queue")
    }
}

/// One task-to-executor assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispatchDecision {
    pub task: TaskId,
    pub executor: ExecutorId,
    /// Per required object, the executors to try in order. The target itself
    /// comes first when the index lists it. An empty list means persistent
    /// storage.
    pub hints: BTreeMap<ObjectId, Vec<ExecutorId>>,
    /// Overlap of the target's indexed contents with the task's inputs.
    pub score: u64,
    /// Index lookups spent on this decision.
    pub index_lookups: u32,
    /// Rounds the task spent deferred before this decision.
    pub deferrals: u32,
}

impl DispatchDecision {
    pub fn hint_count(&self) -> usize {
        self.hints.values().map(Vec::len).sum()
    }
}

/// Executors visible to the dispatcher. `idle` must be a subset of `ready`.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub ready: &'a BTreeSet<ExecutorId>,
    pub idle: &'a BTreeSet<ExecutorId>,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Scheduler { config }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn policy(&self) -> DispatchPolicy {
        self.config.policy
    }

    /// Runs one scheduling round, removing dispatched tasks from `queue`.
    ///
    /// `object_size` supplies working sizes for byte-weighted scoring.
    pub fn select(
        &self,
        queue: &mut WaitQueue,
        pool: PoolView<'_>,
        index: &LocationIndex,
        object_size: &dyn Fn(ObjectId) -> u64,
    ) -> Result<Vec<DispatchDecision>> {
        if let Some(stray) = pool.idle.iter().find(|e| !pool.ready.contains(e)) {
            return Err(Error::Logic(format!("idle executor {stray} is not in the pool")));
        }
        let mut idle = pool.idle.clone();
        let mut decisions = Vec::new();
        let mut pos = 0;
        while pos < queue.len() && !idle.is_empty() {
            let task = &queue.tasks[pos];
            let choice = match self.config.policy {
                DispatchPolicy::FirstAvailable | DispatchPolicy::FirstCacheAvailable => {
                    Some(*idle.first().expect("idle set is non-empty"))
                }
                DispatchPolicy::MaxComputeUtil => {
                    let (scores, _) = self.scores(&task.required, index, object_size);
                    Some(best_of(idle.iter().copied(), &scores, &idle))
                }
                DispatchPolicy::MaxCacheHit => {
                    let (scores, _) = self.scores(&task.required, index, object_size);
                    let best = best_of(pool.ready.iter().copied(), &scores, &idle);
                    if idle.contains(&best) {
                        Some(best)
                    } else if self.config.max_defer.is_some_and(|m| task.deferrals >= m) {
                        Some(best_of(idle.iter().copied(), &scores, &idle))
                    } else {
                        None
                    }
                }
            };
            match choice {
                Some(executor) => {
                    idle.remove(&executor);
                    let task = queue.take(pos);
                    decisions.push(self.decide(task, executor, index, object_size));
                }
                None => {
                    queue.tasks[pos].deferrals += 1;
                    pos += 1;
                }
            }
        }
        Ok(decisions)
    }

    fn scores(
        &self,
        required: &[ObjectId],
        index: &LocationIndex,
        object_size: &dyn Fn(ObjectId) -> u64,
    ) -> (BTreeMap<ExecutorId, u64>, u32) {
        let mut scores = BTreeMap::new();
        for &o in required {
            let w = match self.config.score {
                ScoreMode::Count => 1,
                ScoreMode::Bytes => object_size(o),
            };
            for &e in index.locate(o) {
                *scores.entry(e).or_insert(0) += w;
            }
        }
        (scores, required.len() as u32)
    }

    fn decide(
        &self,
        task: QueuedTask,
        executor: ExecutorId,
        index: &LocationIndex,
        object_size: &dyn Fn(ObjectId) -> u64,
    ) -> DispatchDecision {
        if !self.config.policy.is_data_aware() {
            return DispatchDecision {
                task: task.id,
                executor,
                hints: task.required.iter().map(|&o| (o, Vec::new())).collect(),
                score: 0,
                index_lookups: 0,
                deferrals: task.deferrals,
            };
        }
        let (scores, mut lookups) = match self.config.policy {
            DispatchPolicy::FirstCacheAvailable => (BTreeMap::new(), 0),
            _ => self.scores(&task.required, index, object_size),
        };
        let mut hints = BTreeMap::new();
        let mut score = scores.get(&executor).copied().unwrap_or(0);
        let mut fca_score = 0;
        for &o in &task.required {
            let locs = index.locate(o);
            lookups += 1;
            let mut ordered = Vec::with_capacity(locs.len());
            if locs.contains(&executor) {
                ordered.push(executor);
                fca_score += match self.config.score {
                    ScoreMode::Count => 1,
                    ScoreMode::Bytes => object_size(o),
                };
            }
            ordered.extend(locs.iter().copied().filter(|&e| e != executor));
            hints.insert(o, ordered);
        }
        if self.config.policy == DispatchPolicy::FirstCacheAvailable {
            score = fca_score;
        }
        DispatchDecision {
            task: task.id,
            executor,
            hints,
            score,
            index_lookups: lookups,
            deferrals: task.deferrals,
        }
    }
}

/// Highest score wins; ties prefer idle executors, then the lowest id.
fn best_of(
    candidates: impl Iterator<Item = ExecutorId>,
    scores: &BTreeMap<ExecutorId, u64>,
    idle: &BTreeSet<ExecutorId>,
) -> ExecutorId {
    candidates
        .map(|e| (scores.get(&e).copied().unwrap_or(0), idle.contains(&e), e))
        .max_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(b.2.cmp(&a.2)))
        .map(|(_, _, e)| e)
        .expect("at least one candidate executor")
}
