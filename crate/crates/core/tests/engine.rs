use std::collections::{BTreeMap, BTreeSet};

use diffuse_core::cache::{Cache, CacheConfig, EvictionPolicy};
use diffuse_core::engine::{acquire_inputs, run, run_with_log, shared_bandwidth_share, PoolConfig, SimEventKind};
use diffuse_core::index::{IndexUpdate, LocationIndex};
use diffuse_core::metrics::Tier;
use diffuse_core::units::{GBPS, MB};
use diffuse_core::workload::{generate_locality_workload, DataObject, SizePreset, Task, Workload};
use diffuse_core::{
    AllocationMode, DispatchPolicy, Error, ExecutorId, LogRecord, ObjectId, ProvisionerConfig, ResourceModel, Scenario,
    Simulation, TaskId,
};

fn single_object_workload(objects: u32, size: u64, compute: f64) -> Workload {
    let objs = (0..objects)
        .map(|i| DataObject {
            id: ObjectId(i),
            transfer_size: size,
            working_size: size,
        })
        .collect();
    let tasks = (0..objects)
        .map(|i| Task {
            id: TaskId(i),
            required_objects: vec![ObjectId(i)],
            compute_time: compute,
        })
        .collect();
    Workload::new(objs, tasks).unwrap()
}

#[test]
fn single_task_closed_form() {
    let w = Workload::new(
        vec![DataObject {
            id: ObjectId(0),
            transfer_size: 2 * MB,
            working_size: 6 * MB,
        }],
        vec![Task {
            id: TaskId(0),
            required_objects: vec![ObjectId(0)],
            compute_time: 0.25,
        }],
    )
    .unwrap();
    let mut sc = Scenario::new("one", w, 1, DispatchPolicy::FirstAvailable);
    // a single I/O server removes the per-server ceiling
    sc.resources.persistent_io_servers = 1;
    let r = run(&sc).unwrap();
    let res = sc.resources;
    let rate = res.persistent_read_cap.min(res.local_disk_bw);
    let expect = res.per_transfer_latency + (2 * MB) as f64 * 8.0 / rate + 0.25;
    assert_eq!(r.bytes_persistent, 2 * MB);
    assert_eq!(r.bytes_peer, 0);
    assert_eq!(r.bytes_local, 0);
    assert!((r.makespan - expect).abs() < 1e-9, "{} vs {}", r.makespan, expect);

    // with the default eight servers one reader gets an eighth of the cap
    sc.resources.persistent_io_servers = 8;
    let r = run(&sc).unwrap();
    let rate = shared_bandwidth_share(1, res.persistent_read_cap, 8);
    assert!((rate - 0.425 * GBPS).abs() < 1.0);
    let expect = res.per_transfer_latency + (2 * MB) as f64 * 8.0 / rate + 0.25;
    assert!((r.makespan - expect).abs() < 1e-9);
}

#[test]
fn sixty_four_readers_share_the_store_fairly() {
    let sc = Scenario::new(
        "fair",
        single_object_workload(64, 100 * MB, 0.0),
        64,
        DispatchPolicy::FirstAvailable,
    );
    let (r, log) = run_with_log(&sc).unwrap();
    let cap = sc.resources.persistent_read_cap;
    let each = cap / 64.0;
    let expect = sc.resources.per_transfer_latency + (100 * MB) as f64 * 8.0 / each;
    assert!((r.makespan - expect).abs() < 1e-6, "{} vs {}", r.makespan, expect);
    assert!((r.peak_persistent_bps - cap).abs() / cap < 1e-9);
    let done: Vec<f64> = log
        .iter()
        .filter_map(|l| match l {
            LogRecord::TaskComplete { time, .. } => Some(*time),
            _ => None,
        })
        .collect();
    assert_eq!(done.len(), 64);
    assert!(done.iter().all(|t| (t - expect).abs() < 1e-6));
}

fn two_caches(policy: EvictionPolicy) -> BTreeMap<ExecutorId, Cache> {
    [ExecutorId(0), ExecutorId(1)]
        .into_iter()
        .map(|e| {
            (
                e,
                Cache::new(CacheConfig {
                    capacity: 100 * MB,
                    policy,
                }),
            )
        })
        .collect()
}

#[test]
fn acquire_local_hit_reads_working_size_from_disk() {
    let w = generate_locality_workload(3, 1.0, SizePreset::Gz, 1).unwrap();
    let res = ResourceModel::default();
    let mut caches = two_caches(EvictionPolicy::Lru);
    let obj = *w.object(ObjectId(0)).unwrap();
    caches.get_mut(&ExecutorId(0)).unwrap().insert(&obj).unwrap();
    let mut index = LocationIndex::new(1.0);
    let task = Task {
        id: TaskId(9),
        required_objects: vec![ObjectId(0)],
        compute_time: 0.0,
    };
    let hints = [(ObjectId(0), vec![ExecutorId(0)])].into();
    let got = acquire_inputs(ExecutorId(0), &mut caches, &task, &hints, &w, &res, DispatchPolicy::MaxComputeUtil, &mut index).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].tier, Tier::Local);
    assert_eq!(got[0].bytes, 6 * MB);
    assert!((got[0].duration - (6 * MB) as f64 * 8.0 / res.local_disk_bw).abs() < 1e-12);
    assert!(!index.has_pending());
}

#[test]
fn stale_hint_falls_back_to_persistent_and_corrects_index() {
    let w = generate_locality_workload(3, 1.0, SizePreset::Gz, 1).unwrap();
    let res = ResourceModel::default();
    let mut caches = two_caches(EvictionPolicy::Lru);
    let mut index = LocationIndex::new(1.0);
    index.add_location(ObjectId(1), ExecutorId(1));
    let task = Task {
        id: TaskId(0),
        required_objects: vec![ObjectId(1)],
        compute_time: 0.0,
    };
    let hints = [(ObjectId(1), vec![ExecutorId(1)])].into();
    let got = acquire_inputs(ExecutorId(0), &mut caches, &task, &hints, &w, &res, DispatchPolicy::MaxComputeUtil, &mut index).unwrap();
    assert_eq!(got[0].tier, Tier::Persistent);
    assert_eq!(got[0].bytes, 2 * MB);
    assert_eq!(got[1].tier, Tier::Local);
    assert_eq!(got[1].bytes, 6 * MB);
    assert_eq!(index.pending_len(ExecutorId(1)), 1);
    assert_eq!(index.pending_len(ExecutorId(0)), 1);
    index.apply_all();
    assert_eq!(index.locate(ObjectId(1)), &[ExecutorId(0)]);
    assert!(caches[&ExecutorId(0)].contains(ObjectId(1)));
}

#[test]
fn live_peer_hint_is_used() {
    let w = generate_locality_workload(3, 1.0, SizePreset::Gz, 1).unwrap();
    let res = ResourceModel::default();
    let mut caches = two_caches(EvictionPolicy::Lru);
    let obj = *w.object(ObjectId(2)).unwrap();
    caches.get_mut(&ExecutorId(1)).unwrap().insert(&obj).unwrap();
    let mut index = LocationIndex::new(0.0);
    let task = Task {
        id: TaskId(0),
        required_objects: vec![ObjectId(2)],
        compute_time: 0.0,
    };
    let hints = [(ObjectId(2), vec![ExecutorId(1)])].into();
    let got = acquire_inputs(ExecutorId(0), &mut caches, &task, &hints, &w, &res, DispatchPolicy::MaxComputeUtil, &mut index).unwrap();
    assert_eq!(got[0].tier, Tier::Peer);
    assert_eq!(got[0].source, Some(ExecutorId(1)));
    assert_eq!(index.locate(ObjectId(2)), &[ExecutorId(0)]);
    // first-available ignores everything and caches nothing
    let mut caches = two_caches(EvictionPolicy::Lru);
    let got = acquire_inputs(ExecutorId(0), &mut caches, &task, &hints, &w, &res, DispatchPolicy::FirstAvailable, &mut index).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].tier, Tier::Persistent);
    assert!(caches[&ExecutorId(0)].is_empty());
}

/// Small caches and many executors so evictions and peer fetches are common.
fn churn_scenario(update_interval: f64, policy: DispatchPolicy) -> Scenario {
    let w = generate_locality_workload(60, 8.0, SizePreset::Gz, 3).unwrap();
    let mut sc = Scenario::new("churn", w, 6, policy);
    sc.cache = CacheConfig {
        capacity: 30 * MB,
        policy: EvictionPolicy::Lru,
    };
    sc.update_interval = update_interval;
    sc
}

#[test]
fn synchronous_index_tracks_ground_truth_every_step() {
    for policy in [DispatchPolicy::MaxComputeUtil, DispatchPolicy::MaxCacheHit, DispatchPolicy::FirstCacheAvailable] {
        let mut sim = Simulation::new(churn_scenario(0.0, policy)).unwrap();
        let mut steps = 0;
        while sim.step().unwrap().is_some() {
            steps += 1;
            assert_eq!(sim.index().snapshot(), sim.ground_truth(), "{policy:?} step {steps}");
        }
        assert!(steps > 1000);
        let r = sim.finish();
        assert!(r.evictions > 0);
        assert_eq!(r.stale_hints, 0);
    }
}

#[test]
fn batched_index_converges_at_every_flush() {
    let mut sim = Simulation::new(churn_scenario(0.5, DispatchPolicy::MaxComputeUtil)).unwrap();
    let mut flushes = 0;
    let mut diverged = false;
    while let Some(kind) = sim.step().unwrap() {
        if kind == SimEventKind::IndexFlush {
            flushes += 1;
            assert_eq!(sim.index().snapshot(), sim.ground_truth());
        } else if sim.index().snapshot() != sim.ground_truth() {
            diverged = true;
        }
    }
    assert!(flushes > 5);
    assert!(diverged, "a batched index should lag behind at some point");
}

#[test]
fn stale_hints_occur_only_with_batched_updates() {
    let r = run(&churn_scenario(2.0, DispatchPolicy::MaxComputeUtil)).unwrap();
    assert!(r.stale_hints > 0);
    assert_eq!(r.tasks_completed, r.tasks_total);
}

#[test]
fn identical_scenarios_give_identical_reports_and_logs() {
    let sc = churn_scenario(0.5, DispatchPolicy::MaxCacheHit);
    let (a, la) = run_with_log(&sc).unwrap();
    let (b, lb) = run_with_log(&sc).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(la, lb);
}

#[test]
fn bytes_are_conserved_per_task_and_object() {
    let sc = churn_scenario(0.5, DispatchPolicy::MaxComputeUtil);
    let w = sc.workload.clone();
    let (r, log) = run_with_log(&sc).unwrap();
    let mut accessed: BTreeMap<(TaskId, ObjectId), Tier> = BTreeMap::new();
    let mut read: BTreeSet<(TaskId, ObjectId)> = BTreeSet::new();
    let (mut local, mut peer, mut persistent) = (0u64, 0u64, 0u64);
    let (mut hl, mut hp, mut miss) = (0u64, 0u64, 0u64);
    for rec in &log {
        match rec {
            LogRecord::Access { task, object, tier, bytes, .. } => {
                assert!(accessed.insert((*task, *object), *tier).is_none(), "object accessed twice by one task");
                let o = w.object(*object).unwrap();
                match tier {
                    Tier::Local => {
                        assert_eq!(*bytes, 0);
                        hl += 1;
                    }
                    Tier::Peer => {
                        assert_eq!(*bytes, o.transfer_size);
                        peer += bytes;
                        hp += 1;
                    }
                    Tier::Persistent => {
                        assert_eq!(*bytes, o.transfer_size);
                        persistent += bytes;
                        miss += 1;
                    }
                }
            }
            LogRecord::LocalRead { task, object, bytes, .. } => {
                assert_eq!(*bytes, w.object(*object).unwrap().working_size);
                assert!(read.insert((*task, *object)));
                local += bytes;
            }
            _ => {}
        }
    }
    let expected: BTreeSet<(TaskId, ObjectId)> = w
        .tasks()
        .iter()
        .flat_map(|t| t.required_objects.iter().map(move |&o| (t.id, o)))
        .collect();
    assert_eq!(accessed.keys().copied().collect::<BTreeSet<_>>(), expected);
    assert_eq!(read, expected);
    assert_eq!((local, peer, persistent), (r.bytes_local, r.bytes_peer, r.bytes_persistent));
    assert_eq!((hl, hp, miss), (r.cache_hits_local, r.cache_hits_peer, r.cache_misses));
    assert_eq!(r.accesses, hl + hp + miss);
}

#[test]
fn throughput_series_integrates_to_byte_totals() {
    let sc = churn_scenario(0.5, DispatchPolicy::MaxComputeUtil);
    let r = run(&sc).unwrap();
    for (tier, total) in [
        (Tier::Local, r.bytes_local),
        (Tier::Peer, r.bytes_peer),
        (Tier::Persistent, r.bytes_persistent),
    ] {
        let got = r.series_bytes(tier);
        assert!((got - total as f64).abs() <= 1e-6 * total as f64 + 1.0, "{tier:?}: {got} vs {total}");
    }
    for b in &r.throughput_series {
        assert!(b.persistent_bps <= sc.resources.persistent_read_cap * (1.0 + 1e-9));
    }
}

#[test]
fn warm_caches_remove_persistent_reads() {
    let w = generate_locality_workload(64, 4.0, SizePreset::Custom { transfer_size: 100 * MB, working_size: 100 * MB }, 5).unwrap();
    let mut sc = Scenario::new("warm", w, 16, DispatchPolicy::MaxComputeUtil);
    sc.warm_caches = true;
    let r = run(&sc).unwrap();
    assert_eq!(r.bytes_persistent, 0);
    assert_eq!(r.cache_misses, 0);
    assert_eq!(r.bytes_local, 256 * 100 * MB);
}

#[test]
fn first_available_never_caches() {
    let w = generate_locality_workload(50, 4.0, SizePreset::Gz, 5).unwrap();
    let sc = Scenario::new("fa", w, 8, DispatchPolicy::FirstAvailable);
    let mut sim = Simulation::new(sc).unwrap();
    sim.run_to_completion().unwrap();
    assert!(sim.ground_truth().is_empty());
    let r = sim.finish();
    assert_eq!(r.cache_misses, 200);
    assert_eq!(r.bytes_persistent, 200 * 2 * MB);
    assert_eq!(r.bytes_local, 0);
}

#[test]
fn clock_never_decreases_and_stops_at_completion() {
    let mut sim = Simulation::new(churn_scenario(0.5, DispatchPolicy::MaxCacheHit)).unwrap();
    let mut last = 0.0;
    while sim.step().unwrap().is_some() {
        assert!(sim.now() >= last);
        last = sim.now();
    }
    assert!(sim.is_finished());
    let processed = sim.events_processed();
    assert!(sim.step().unwrap().is_none());
    assert_eq!(sim.events_processed(), processed);
}

#[test]
fn oversized_object_is_rejected_before_running() {
    let w = single_object_workload(2, 60 * diffuse_core::units::GB, 0.0);
    let sc = Scenario::new("big", w, 2, DispatchPolicy::MaxComputeUtil);
    assert!(matches!(run(&sc), Err(Error::Config(_))));
}

#[test]
fn dynamic_pool_grows_exponentially_and_drains() {
    let w = single_object_workload(400, 2 * MB, 1.0);
    let mut sc = Scenario::new("dyn", w, 0, DispatchPolicy::MaxComputeUtil);
    sc.pool = PoolConfig::Dynamic(ProvisionerConfig {
        min_executors: 0,
        max_executors: 32,
        trigger_queue_length: 1,
        allocation_mode: AllocationMode::Exponential,
        startup_delay: 5.0,
        idle_timeout: 30.0,
        ..ProvisionerConfig::fixed(0)
    });
    let r = run(&sc).unwrap();
    assert_eq!(r.tasks_completed, 400);
    assert_eq!(r.executors_peak, 32);
    let sizes: Vec<u64> = r.pool_size_series.iter().map(|p| p.pool).collect();
    let mut distinct = sizes.clone();
    distinct.dedup();
    assert_eq!(&distinct[..7], &[0, 1, 2, 4, 8, 16, 32]);
    assert!(r.executor_seconds > 0.0);
}

#[test]
fn empty_pool_below_trigger_reports_a_stall() {
    let w = single_object_workload(3, 2 * MB, 1.0);
    let mut sc = Scenario::new("stall", w, 0, DispatchPolicy::MaxComputeUtil);
    sc.update_interval = 1.0;
    sc.pool = PoolConfig::Dynamic(ProvisionerConfig {
        min_executors: 0,
        max_executors: 4,
        trigger_queue_length: 10,
        allocation_mode: AllocationMode::AllAtOnce,
        ..ProvisionerConfig::fixed(0)
    });
    match run(&sc) {
        Err(Error::Logic(msg)) => assert!(msg.contains("stalled"), "{msg}"),
        other => panic!("expected a stall, got {other:?}"),
    }
}

#[test]
fn released_executors_leave_the_index() {
    let w = single_object_workload(40, 2 * MB, 0.5);
    let mut sc = Scenario::new("release", w, 0, DispatchPolicy::MaxComputeUtil);
    sc.update_interval = 0.0;
    sc.arrival_interval = 0.3;
    sc.pool = PoolConfig::Dynamic(ProvisionerConfig {
        min_executors: 1,
        max_executors: 8,
        trigger_queue_length: 2,
        allocation_mode: AllocationMode::AllAtOnce,
        startup_delay: 1.0,
        idle_timeout: 0.5,
        ..ProvisionerConfig::fixed(0)
    });
    let mut sim = Simulation::new(sc).unwrap();
    let mut shrank = false;
    let mut peak = 0;
    while sim.step().unwrap().is_some() {
        peak = peak.max(sim.pool_size());
        if sim.pool_size() < peak {
            shrank = true;
        }
        assert_eq!(sim.index().snapshot(), sim.ground_truth());
    }
    assert_eq!(peak, 8);
    assert!(shrank);
}

#[test]
fn index_updates_are_recorded_for_inserts_and_evictions() {
    let mut index = LocationIndex::new(1.0);
    index.record(ExecutorId(3), IndexUpdate::Add(ObjectId(1)));
    assert!(index.locate(ObjectId(1)).is_empty());
    assert_eq!(index.apply_updates(ExecutorId(3)), 1);
    assert_eq!(index.locate(ObjectId(1)), &[ExecutorId(3)]);
}
