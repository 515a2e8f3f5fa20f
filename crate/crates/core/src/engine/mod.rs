//! Deterministic discrete-event simulation of a dispatcher, its executors
//! and the tiered storage they read from.
//!
//! Each executor runs one task at a time and acquires the task's inputs one
//! object after another: a local cache hit is read from local disk; a miss is
//! fetched from the first hinted peer that still holds the object, or from
//! persistent storage, then cached and read locally. Under first-available
//! dispatch nothing is cached and every input streams from persistent
//! storage. Network transfers share bandwidth fairly within their channel
//! (the persistent store, or one peer's outbound link) and are re-rated on
//! every start and finish.

mod bandwidth;
mod presets;
mod scenario;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bandwidth::{shared_bandwidth_share, ResourceModel};
pub use presets::{preset, preset_names, PRESETS};
pub use scenario::{
    CachePolicyName, CacheSection, DispatchSection, IndexSection, PoolConfig, PoolSection, ResourcesSection,
    Scenario, ScenarioFile, SizeName, WorkloadSection, SCENARIO_SCHEMA_VERSION, SWEEP_AXES,
};

use bandwidth::{Channel, Flow, FlowGroup};

use crate::cache::{Cache, CacheConfig, EvictionPolicy, Lookup};
use crate::error::{Error, Result};
use crate::ids::{ExecutorId, ObjectId, TaskId};
use crate::index::{IndexUpdate, LocationIndex};
use crate::metrics::{MetricsCollector, MetricsReport, ReportHead, Tier};
use crate::provisioner::{provision_evaluate, ExecutorPhase, PoolMember, ProvisionAction, ReleaseCachePolicy};
use crate::scheduler::{DispatchDecision, DispatchPolicy, PoolView, Scheduler, WaitQueue};
use crate::units::transfer_secs;
use crate::workload::{Task, Workload};

/// Event kinds in tie-break order: at equal times, earlier variants run first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    TransferComplete,
    LocalReadComplete,
    ComputeComplete,
    TransferStart,
    ExecutorReady,
    IndexFlush,
    TaskArrival,
    ProvisionTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Payload {
    TransferComplete { channel: Channel, generation: u64 },
    LocalReadComplete { executor: ExecutorId, token: u64 },
    ComputeComplete { executor: ExecutorId },
    TransferStart { executor: ExecutorId, token: u64 },
    ExecutorReady { executor: ExecutorId },
    IndexFlush,
    TaskArrival { task: usize },
    ProvisionTick,
}

impl Payload {
    fn kind(&self) -> SimEventKind {
        match self {
            Payload::TransferComplete { .. } => SimEventKind::TransferComplete,
            Payload::LocalReadComplete { .. } => SimEventKind::LocalReadComplete,
            Payload::ComputeComplete { .. } => SimEventKind::ComputeComplete,
            Payload::TransferStart { .. } => SimEventKind::TransferStart,
            Payload::ExecutorReady { .. } => SimEventKind::ExecutorReady,
            Payload::IndexFlush => SimEventKind::IndexFlush,
            Payload::TaskArrival { .. } => SimEventKind::TaskArrival,
            Payload::ProvisionTick => SimEventKind::ProvisionTick,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    payload: Payload,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.payload.kind() as u8, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

/// One record of the optional event log, serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    Dispatch {
        time: f64,
        task: TaskId,
        executor: ExecutorId,
        policy: DispatchPolicy,
        score: u64,
        hints: usize,
        index_lookups: u32,
    },
    /// One task input, classified by the tier that supplied it. `bytes` is
    /// what crossed the network (zero for a local hit).
    Access {
        time: f64,
        task: TaskId,
        executor: ExecutorId,
        object: ObjectId,
        tier: Tier,
        source: Option<ExecutorId>,
        bytes: u64,
    },
    LocalRead {
        time: f64,
        task: TaskId,
        executor: ExecutorId,
        object: ObjectId,
        bytes: u64,
    },
    CacheInsert {
        time: f64,
        executor: ExecutorId,
        object: ObjectId,
    },
    CacheEvict {
        time: f64,
        executor: ExecutorId,
        object: ObjectId,
    },
    StaleHint {
        time: f64,
        executor: ExecutorId,
        peer: ExecutorId,
        object: ObjectId,
    },
    TaskComplete {
        time: f64,
        task: TaskId,
        executor: ExecutorId,
    },
    IndexFlush {
        time: f64,
        records: usize,
    },
    Pool {
        time: f64,
        pool: u64,
        queue: u64,
    },
}

/// One input acquisition step: a fetch or a local read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Acquisition {
    pub object: ObjectId,
    pub tier: Tier,
    pub source: Option<ExecutorId>,
    pub bytes: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Source {
    Local,
    Peer(ExecutorId),
    Persistent,
}

/// Where an executor gets `obj` from. A local hit touches the cache's
/// recency state. Hinted peers that no longer hold the object are reported
/// through `on_stale`; peers that have left the pool are skipped silently.
pub(crate) fn resolve_source(
    me: ExecutorId,
    obj: ObjectId,
    hints: &[ExecutorId],
    own: &mut Cache,
    data_aware: bool,
    peer_has: impl Fn(ExecutorId) -> Option<bool>,
    mut on_stale: impl FnMut(ExecutorId),
) -> Source {
    if !data_aware {
        return Source::Persistent;
    }
    if own.lookup(obj) == Lookup::Hit {
        return Source::Local;
    }
    for &peer in hints.iter().filter(|&&p| p != me) {
        match peer_has(peer) {
            Some(true) => return Source::Peer(peer),
            Some(false) => on_stale(peer),
            None => {}
        }
    }
    Source::Persistent
}

/// Resolves and performs, without contention, the acquisition of every input
/// of `task` on `executor`. Fetched objects are cached and their index
/// records (including corrective removes for stale hints) are recorded.
/// Durations assume the transfer runs alone.
#[allow(clippy::too_many_arguments)]
pub fn acquire_inputs(
    executor: ExecutorId,
    caches: &mut BTreeMap<ExecutorId, Cache>,
    task: &Task,
    hints: &BTreeMap<ObjectId, Vec<ExecutorId>>,
    workload: &Workload,
    resources: &ResourceModel,
    policy: DispatchPolicy,
    index: &mut LocationIndex,
) -> Result<Vec<Acquisition>> {
    let data_aware = policy.is_data_aware();
    let mut out = Vec::new();
    for &obj in &task.required_objects {
        let info = *workload
            .object(obj)
            .ok_or_else(|| Error::Logic(format!("unknown object {obj}")))?;
        let mut own = caches
            .remove(&executor)
            .ok_or_else(|| Error::Logic(format!("no cache for executor {executor}")))?;
        let mut stale = Vec::new();
        let source = resolve_source(
            executor,
            obj,
            hints.get(&obj).map_or(&[][..], Vec::as_slice),
            &mut own,
            data_aware,
            |p| caches.get(&p).map(|c| c.contains(obj)),
            |p| stale.push(p),
        );
        for peer in stale {
            index.record(peer, IndexUpdate::Remove(obj));
        }
        let local_read = Acquisition {
            object: obj,
            tier: Tier::Local,
            source: Some(executor),
            bytes: info.working_size,
            duration: transfer_secs(info.working_size, resources.local_disk_bw),
        };
        match source {
            Source::Local => out.push(local_read),
            Source::Peer(_) | Source::Persistent => {
                let (tier, from, rate) = match source {
                    Source::Peer(p) => (Tier::Peer, Some(p), resources.peer_rate(1)),
                    _ => (Tier::Persistent, None, resources.persistent_rate(1, false)),
                };
                out.push(Acquisition {
                    object: obj,
                    tier,
                    source: from,
                    bytes: info.transfer_size,
                    duration: resources.per_transfer_latency + transfer_secs(info.transfer_size, rate),
                });
                if data_aware {
                    if !own.contains(obj) {
                        for victim in own.insert(&info)? {
                            index.record(executor, IndexUpdate::Remove(victim));
                        }
                        index.record(executor, IndexUpdate::Add(obj));
                    }
                    out.push(local_read);
                }
            }
        }
        caches.insert(executor, own);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Starting,
    Idle { since: f64 },
    Busy,
}

#[derive(Debug, Clone, Copy)]
struct PendingFetch {
    object: ObjectId,
    source: Source,
    token: u64,
}

#[derive(Debug, Clone)]
struct Job {
    task: usize,
    hints: BTreeMap<ObjectId, Vec<ExecutorId>>,
    next: usize,
    fetch: Option<PendingFetch>,
    read_token: Option<u64>,
}

#[derive(Debug, Clone)]
struct Executor {
    cache: Cache,
    phase: Phase,
    job: Option<Job>,
}

/// A running simulation. Use [`run`] for the common case; stepping is
/// exposed so tests can compare the index with cache contents mid-run.
pub struct Simulation {
    scenario: Scenario,
    scheduler: Scheduler,
    task_slot: HashMap<TaskId, usize>,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Event>,
    executors: Vec<Option<Executor>>,
    ready: BTreeSet<ExecutorId>,
    idle: BTreeSet<ExecutorId>,
    retained: Vec<Cache>,
    queue: WaitQueue,
    index: LocationIndex,
    groups: BTreeMap<Channel, FlowGroup>,
    metrics: MetricsCollector,
    next_token: u64,
    tasks_completed: u64,
    makespan: f64,
    pool_peak: u64,
    needs_schedule: bool,
    log: Option<Vec<LogRecord>>,
    events_processed: u64,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let task_slot = scenario
            .workload
            .tasks()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id, i))
            .collect();
        let mut sim = Simulation {
            scheduler: Scheduler::new(scenario.scheduler),
            task_slot,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            executors: Vec::new(),
            ready: BTreeSet::new(),
            idle: BTreeSet::new(),
            retained: Vec::new(),
            queue: WaitQueue::new(),
            index: LocationIndex::new(scenario.update_interval),
            groups: BTreeMap::new(),
            metrics: MetricsCollector::new(scenario.bucket_width),
            next_token: 0,
            tasks_completed: 0,
            makespan: 0.0,
            pool_peak: 0,
            needs_schedule: false,
            log: None,
            events_processed: 0,
            scenario,
        };
        let initial = match &sim.scenario.pool {
            PoolConfig::Static(n) => *n,
            PoolConfig::Dynamic(p) => p.min_executors,
        };
        for _ in 0..initial {
            let id = sim.spawn_executor(Phase::Idle { since: 0.0 });
            sim.ready.insert(id);
            sim.idle.insert(id);
        }
        if sim.scenario.warm_caches {
            sim.warm_caches()?;
        }
        sim.record_pool();
        if !sim.scenario.workload.tasks().is_empty() {
            sim.push(0.0, Payload::TaskArrival { task: 0 });
            if sim.scenario.update_interval > 0.0 {
                sim.push(sim.scenario.update_interval, Payload::IndexFlush);
            }
            if matches!(sim.scenario.pool, PoolConfig::Dynamic(_)) {
                sim.push(0.0, Payload::ProvisionTick);
            }
        }
        Ok(sim)
    }

    /// Keeps every log record in memory; see [`Simulation::take_log`].
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn index(&self) -> &LocationIndex {
        &self.index
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queue(&self) -> &WaitQueue {
        &self.queue
    }

    pub fn pool_size(&self) -> usize {
        self.executors.iter().flatten().count()
    }

    pub fn idle_executors(&self) -> &BTreeSet<ExecutorId> {
        &self.idle
    }

    pub fn busy_executors(&self) -> usize {
        self.executors
            .iter()
            .flatten()
            .filter(|e| e.phase == Phase::Busy)
            .count()
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn is_finished(&self) -> bool {
        self.tasks_completed as usize == self.scenario.workload.tasks().len()
    }

    /// Actual cache contents of every executor in the pool.
    pub fn ground_truth(&self) -> BTreeMap<ObjectId, Vec<ExecutorId>> {
        let mut map: BTreeMap<ObjectId, Vec<ExecutorId>> = BTreeMap::new();
        for (i, ex) in self.executors.iter().enumerate() {
            if let Some(ex) = ex {
                for o in ex.cache.object_ids() {
                    map.entry(o).or_default().push(ExecutorId(i as u32));
                }
            }
        }
        map
    }

    pub fn cache(&self, executor: ExecutorId) -> Option<&Cache> {
        self.executors
            .get(executor.index())
            .and_then(Option::as_ref)
            .map(|e| &e.cache)
    }

    /// Processes the next event (and the scheduling round it enables, once
    /// no other event shares its timestamp). Returns the event's kind, or
    /// `None` when every task has completed.
    pub fn step(&mut self) -> Result<Option<SimEventKind>> {
        if self.is_finished() {
            return Ok(None);
        }
        let Some(ev) = self.heap.pop() else {
            return Err(Error::Logic(format!(
                "simulation stalled at t={} with {} tasks outstanding",
                self.now,
                self.scenario.workload.tasks().len() as u64 - self.tasks_completed
            )));
        };
        debug_assert!(ev.time >= self.now, "clock moved backwards");
        self.now = ev.time;
        self.events_processed += 1;
        let kind = ev.payload.kind();
        self.handle(ev.payload)?;
        let batch_done = self.heap.peek().map_or(true, |next| next.time > self.now);
        if self.needs_schedule && batch_done {
            self.needs_schedule = false;
            self.schedule()?;
        }
        Ok(Some(kind))
    }

    pub fn run_to_completion(&mut self) -> Result<()> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn take_log(&mut self) -> Vec<LogRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Finalizes the report. The simulation cannot advance afterwards.
    pub fn finish(mut self) -> MetricsReport {
        let end = self.makespan;
        let pool = self.pool_size() as u64;
        self.metrics.record_pool(end, pool, self.queue.len() as u64);
        let head = ReportHead {
            scenario: self.scenario.name.clone(),
            policy: self.scenario.scheduler.policy.as_str().to_owned(),
            seed: self.scenario.seed,
            executors_peak: self.pool_peak,
            tasks_total: self.scenario.workload.tasks().len() as u64,
            tasks_completed: self.tasks_completed,
        };
        self.metrics.finish(head, end)
    }

    fn push(&mut self, time: f64, payload: Payload) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            payload,
        });
    }

    fn log(&mut self, rec: impl FnOnce() -> LogRecord) {
        if let Some(log) = &mut self.log {
            log.push(rec());
        }
    }

    fn token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    fn spawn_executor(&mut self, phase: Phase) -> ExecutorId {
        let id = ExecutorId(self.executors.len() as u32);
        let mut config: CacheConfig = self.scenario.cache;
        if let EvictionPolicy::Random { seed } = config.policy {
            config.policy = EvictionPolicy::Random {
                seed: seed ^ (id.0 as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            };
        }
        self.executors.push(Some(Executor {
            cache: Cache::new(config),
            phase,
            job: None,
        }));
        id
    }

    fn executor_mut(&mut self, id: ExecutorId) -> &mut Executor {
        self.executors[id.index()]
            .as_mut()
            .expect("event for an executor that left the pool")
    }

    fn record_pool(&mut self) {
        let pool = self.pool_size() as u64;
        self.pool_peak = self.pool_peak.max(pool);
        let queue = self.queue.len() as u64;
        let now = self.now;
        self.metrics.record_pool(now, pool, queue);
        self.log(|| LogRecord::Pool { time: now, pool, queue });
    }

    /// Spreads the catalog round-robin over the initial pool, skipping
    /// executors without room, and registers placements synchronously.
    fn warm_caches(&mut self) -> Result<()> {
        let ids: Vec<ExecutorId> = self.ready.iter().copied().collect();
        if ids.is_empty() {
            return Ok(());
        }
        let workload = self.scenario.workload.clone();
        for (i, obj) in workload.objects().iter().enumerate() {
            for k in 0..ids.len() {
                let e = ids[(i + k) % ids.len()];
                let cache = &mut self.executor_mut(e).cache;
                if cache.used() + obj.working_size <= cache.capacity() {
                    cache.insert(obj)?;
                    self.index.add_location(obj.id, e);
                    break;
                }
            }
        }
        Ok(())
    }

    fn handle(&mut self, payload: Payload) -> Result<()> {
        match payload {
            Payload::TaskArrival { task } => {
                let workload = self.scenario.workload.clone();
                self.queue.enqueue(&workload.tasks()[task]);
                if task + 1 < workload.tasks().len() {
                    let at = self.now.max((task + 1) as f64 * self.scenario.arrival_interval);
                    self.push(at, Payload::TaskArrival { task: task + 1 });
                }
                if !self.idle.is_empty() {
                    self.needs_schedule = true;
                }
            }
            Payload::TransferStart { executor, token } => self.start_flow(executor, token),
            Payload::TransferComplete { channel, generation } => {
                if self.groups.get(&channel).map(|g| g.generation) != Some(generation) {
                    return Ok(());
                }
                self.advance_group(channel);
                let finished = self.groups.get_mut(&channel).expect("group").take_finished();
                self.rerate(channel);
                for flow in finished {
                    self.finish_fetch(flow)?;
                }
            }
            Payload::LocalReadComplete { executor, token } => {
                let job = self.executor_mut(executor).job.as_mut().expect("busy executor");
                debug_assert_eq!(job.read_token, Some(token));
                job.read_token = None;
                self.advance_job(executor)?;
            }
            Payload::ComputeComplete { executor } => {
                let now = self.now;
                let ex = self.executor_mut(executor);
                let job = ex.job.take().expect("busy executor");
                ex.phase = Phase::Idle { since: now };
                self.idle.insert(executor);
                self.tasks_completed += 1;
                self.makespan = now;
                let task = self.scenario.workload.tasks()[job.task].id;
                self.log(|| LogRecord::TaskComplete {
                    time: now,
                    task,
                    executor,
                });
                self.needs_schedule = true;
            }
            Payload::IndexFlush => {
                let records = self.index.apply_all();
                let now = self.now;
                self.log(|| LogRecord::IndexFlush { time: now, records });
                if records > 0 {
                    self.needs_schedule = true;
                }
                if !self.is_finished() {
                    self.push(now + self.scenario.update_interval, Payload::IndexFlush);
                }
            }
            Payload::ProvisionTick => self.provision_tick()?,
            Payload::ExecutorReady { executor } => {
                let now = self.now;
                let adopted = self.retained.pop();
                let ex = self.executor_mut(executor);
                ex.phase = Phase::Idle { since: now };
                let mut adopted_ids = Vec::new();
                if let Some(cache) = adopted {
                    adopted_ids = cache.object_ids().collect();
                    ex.cache = cache;
                }
                for o in adopted_ids {
                    self.index.record(executor, IndexUpdate::Add(o));
                }
                self.ready.insert(executor);
                self.idle.insert(executor);
                self.needs_schedule = true;
            }
        }
        Ok(())
    }

    fn provision_tick(&mut self) -> Result<()> {
        let PoolConfig::Dynamic(config) = self.scenario.pool.clone() else {
            return Ok(());
        };
        let members: Vec<PoolMember> = self
            .executors
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                e.as_ref().map(|e| PoolMember {
                    id: ExecutorId(i as u32),
                    phase: match e.phase {
                        Phase::Starting => ExecutorPhase::Starting,
                        Phase::Idle { since } => ExecutorPhase::Idle { since },
                        Phase::Busy => ExecutorPhase::Busy,
                    },
                })
            })
            .collect();
        let now = self.now;
        for action in provision_evaluate(&config, self.queue.len(), &members, now) {
            match action {
                ProvisionAction::Allocate(n) => {
                    for _ in 0..n {
                        let id = self.spawn_executor(Phase::Starting);
                        self.push(now + config.startup_delay, Payload::ExecutorReady { executor: id });
                    }
                }
                ProvisionAction::Release(ids) => {
                    for id in ids {
                        let ex = self.executors[id.index()].take().expect("released executor exists");
                        debug_assert!(matches!(ex.phase, Phase::Idle { .. }));
                        self.ready.remove(&id);
                        self.idle.remove(&id);
                        self.index.deregister(id);
                        if config.release_cache_policy == ReleaseCachePolicy::RetainUntilReuse {
                            self.retained.push(ex.cache);
                        }
                    }
                }
            }
        }
        self.record_pool();
        if self.is_finished() {
            return Ok(());
        }
        // an empty pool that the provisioner declines to grow, with nothing
        // but periodic ticks left, would tick forever
        let pool_empty = self.executors.iter().all(Option::is_none);
        let only_periodic = self
            .heap
            .iter()
            .all(|e| matches!(e.payload, Payload::ProvisionTick | Payload::IndexFlush));
        if pool_empty && only_periodic {
            return Err(Error::Logic(format!(
                "simulation stalled at t={now}: pool is empty and {} queued tasks never reach the allocation trigger",
                self.queue.len()
            )));
        }
        self.push(now + config.evaluation_interval, Payload::ProvisionTick);
        Ok(())
    }

    fn schedule(&mut self) -> Result<()> {
        if self.queue.is_empty() || self.idle.is_empty() {
            return Ok(());
        }
        let workload = self.scenario.workload.clone();
        let sizes = |o: ObjectId| workload.object(o).map_or(0, |d| d.working_size);
        let started = self.scenario.record_decision_wall_time.then(Instant::now);
        let decisions = self.scheduler.select(
            &mut self.queue,
            PoolView {
                ready: &self.ready,
                idle: &self.idle,
            },
            &self.index,
            &sizes,
        )?;
        let wall = started.map(|t| t.elapsed().as_nanos() as f64 / decisions.len().max(1) as f64);
        for d in decisions {
            self.dispatch(d, wall)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, d: DispatchDecision, wall_ns: Option<f64>) -> Result<()> {
        let now = self.now;
        let policy = self.scheduler.policy();
        self.metrics.record_decision(d.score, d.index_lookups, d.deferrals, wall_ns);
        self.log(|| LogRecord::Dispatch {
            time: now,
            task: d.task,
            executor: d.executor,
            policy,
            score: d.score,
            hints: d.hint_count(),
            index_lookups: d.index_lookups,
        });
        let slot = *self
            .task_slot
            .get(&d.task)
            .ok_or_else(|| Error::Logic(format!("unknown task {}", d.task)))?;
        if !self.idle.remove(&d.executor) {
            return Err(Error::Logic(format!("dispatch to non-idle executor {}", d.executor)));
        }
        let ex = self.executor_mut(d.executor);
        ex.phase = Phase::Busy;
        ex.job = Some(Job {
            task: slot,
            hints: d.hints,
            next: 0,
            fetch: None,
            read_token: None,
        });
        self.acquire_next(d.executor)
    }

    /// Starts acquiring the job's next input, or computing when none remain.
    fn acquire_next(&mut self, executor: ExecutorId) -> Result<()> {
        let workload = self.scenario.workload.clone();
        let data_aware = self.scheduler.policy().is_data_aware();
        let now = self.now;
        let (task_idx, next) = {
            let job = self.executor_mut(executor).job.as_ref().expect("busy executor");
            (job.task, job.next)
        };
        let task = &workload.tasks()[task_idx];
        let Some(&obj) = task.required_objects.get(next) else {
            let done_at = now + task.compute_time + self.scenario.task_overhead;
            self.push(done_at, Payload::ComputeComplete { executor });
            return Ok(());
        };

        let mut ex = self.executors[executor.index()].take().expect("executor in pool");
        let hints = ex.job.as_ref().and_then(|j| j.hints.get(&obj)).cloned().unwrap_or_default();
        let mut stale = Vec::new();
        let source = resolve_source(
            executor,
            obj,
            &hints,
            &mut ex.cache,
            data_aware,
            |p| {
                self.executors
                    .get(p.index())
                    .and_then(Option::as_ref)
                    .map(|peer| peer.cache.contains(obj))
            },
            |p| stale.push(p),
        );
        self.executors[executor.index()] = Some(ex);
        for peer in stale {
            self.metrics.stale_hints += 1;
            self.index.record(peer, IndexUpdate::Remove(obj));
            self.log(|| LogRecord::StaleHint {
                time: now,
                executor,
                peer,
                object: obj,
            });
        }

        match source {
            Source::Local => {
                self.metrics.record_access(Tier::Local, 0);
                self.log(|| LogRecord::Access {
                    time: now,
                    task: task.id,
                    executor,
                    object: obj,
                    tier: Tier::Local,
                    source: Some(executor),
                    bytes: 0,
                });
                self.start_local_read(executor, obj);
            }
            Source::Peer(_) | Source::Persistent => {
                let token = self.token();
                let job = self.executor_mut(executor).job.as_mut().expect("busy executor");
                job.fetch = Some(PendingFetch {
                    object: obj,
                    source,
                    token,
                });
                let latency = self.scenario.resources.per_transfer_latency;
                if latency > 0.0 {
                    self.push(now + latency, Payload::TransferStart { executor, token });
                } else {
                    self.start_flow(executor, token);
                }
            }
        }
        Ok(())
    }

    fn start_local_read(&mut self, executor: ExecutorId, obj: ObjectId) {
        let workload = self.scenario.workload.clone();
        let bytes = workload.object(obj).expect("catalog object").working_size;
        let bw = self.scenario.resources.local_disk_bw;
        let dur = transfer_secs(bytes, bw);
        let now = self.now;
        self.metrics.add_segment(Tier::Local, now, now + dur, bw / 8.0);
        self.metrics.record_local_read(bytes);
        let token = self.token();
        let job = self.executor_mut(executor).job.as_mut().expect("busy executor");
        let task = workload.tasks()[job.task].id;
        job.read_token = Some(token);
        self.log(|| LogRecord::LocalRead {
            time: now,
            task,
            executor,
            object: obj,
            bytes,
        });
        self.push(now + dur, Payload::LocalReadComplete { executor, token });
    }

    fn start_flow(&mut self, executor: ExecutorId, token: u64) {
        let fetch = self
            .executor_mut(executor)
            .job
            .as_ref()
            .and_then(|j| j.fetch)
            .expect("pending fetch");
        debug_assert_eq!(fetch.token, token);
        let bytes = self
            .scenario
            .workload
            .object(fetch.object)
            .expect("catalog object")
            .transfer_size;
        let channel = match fetch.source {
            Source::Peer(p) => Channel::PeerOut(p),
            _ => Channel::Persistent,
        };
        self.advance_group(channel);
        let now = self.now;
        let group = self.groups.entry(channel).or_insert_with(|| FlowGroup {
            last_update: now,
            ..Default::default()
        });
        group.flows.push(Flow {
            token,
            receiver: executor,
            remaining: bytes as f64,
        });
        self.rerate(channel);
    }

    /// Brings a channel's flows up to `now`, crediting the bytes moved.
    fn advance_group(&mut self, channel: Channel) {
        let now = self.now;
        let Some(group) = self.groups.get_mut(&channel) else {
            return;
        };
        let (t0, rate) = (group.last_update, group.aggregate_rate());
        group.advance(now);
        let tier = match channel {
            Channel::Persistent => Tier::Persistent,
            Channel::PeerOut(_) => Tier::Peer,
        };
        self.metrics.add_segment(tier, t0, now, rate);
    }

    /// Recomputes the shared rate of a channel and schedules its next
    /// completion. Older completion events become stale via the generation.
    fn rerate(&mut self, channel: Channel) {
        let now = self.now;
        let res = self.scenario.resources;
        let rw = self.scenario.read_write;
        let group = self.groups.get_mut(&channel).expect("group");
        let k = group.flows.len();
        group.rate = match channel {
            Channel::Persistent => res.persistent_rate(k, rw),
            Channel::PeerOut(_) => res.peer_rate(k),
        } / 8.0;
        group.generation += 1;
        let generation = group.generation;
        let next = group.next_completion(now);
        if channel == Channel::Persistent {
            let agg = group.aggregate_rate() * 8.0;
            self.metrics.note_persistent_rate(agg);
        }
        if let Some(at) = next {
            self.push(at, Payload::TransferComplete { channel, generation });
        }
    }

    fn finish_fetch(&mut self, flow: Flow) -> Result<()> {
        let executor = flow.receiver;
        let now = self.now;
        let workload = self.scenario.workload.clone();
        let data_aware = self.scheduler.policy().is_data_aware();
        let ex = self.executor_mut(executor);
        let job = ex.job.as_mut().expect("busy executor");
        let fetch = job.fetch.take().expect("pending fetch");
        debug_assert_eq!(fetch.token, flow.token);
        let task = workload.tasks()[job.task].id;
        let info = *workload.object(fetch.object).expect("catalog object");
        let (tier, source) = match fetch.source {
            Source::Peer(p) => (Tier::Peer, Some(p)),
            _ => (Tier::Persistent, None),
        };
        self.metrics.record_access(tier, info.transfer_size);
        self.log(|| LogRecord::Access {
            time: now,
            task,
            executor,
            object: info.id,
            tier,
            source,
            bytes: info.transfer_size,
        });
        if !data_aware {
            return self.advance_job(executor);
        }
        let ex = self.executor_mut(executor);
        if !ex.cache.contains(info.id) {
            let evicted = ex.cache.insert(&info)?;
            for victim in evicted {
                self.metrics.evictions += 1;
                self.index.record(executor, IndexUpdate::Remove(victim));
                self.log(|| LogRecord::CacheEvict {
                    time: now,
                    executor,
                    object: victim,
                });
            }
            self.index.record(executor, IndexUpdate::Add(info.id));
            self.log(|| LogRecord::CacheInsert {
                time: now,
                executor,
                object: info.id,
            });
            if self.index.is_synchronous() {
                self.needs_schedule = true;
            }
        }
        self.start_local_read(executor, info.id);
        Ok(())
    }

    fn advance_job(&mut self, executor: ExecutorId) -> Result<()> {
        self.executor_mut(executor).job.as_mut().expect("busy executor").next += 1;
        self.acquire_next(executor)
    }
}

/// Runs a scenario to completion and returns its report.
pub fn run(scenario: &Scenario) -> Result<MetricsReport> {
    let mut sim = Simulation::new(scenario.clone())?;
    sim.run_to_completion()?;
    Ok(sim.finish())
}

/// Like [`run`] but also returns the full event log.
pub fn run_with_log(scenario: &Scenario) -> Result<(MetricsReport, Vec<LogRecord>)> {
    let mut sim = Simulation::new(scenario.clone())?.with_event_log();
    sim.run_to_completion()?;
    let log = sim.take_log();
    Ok((sim.finish(), log))
}
