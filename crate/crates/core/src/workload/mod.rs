//! Tasks, data objects and locality-parameterized workload generation.

mod trace;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use trace::{read_trace, write_trace, TRACE_MAGIC};

use crate::error::{Error, Result};
use crate::ids::{ObjectId, TaskId};
use crate::units::MB;

/// Simulated compute time per task when the caller does not choose one.
pub const DEFAULT_COMPUTE_TIME: f64 = 0.1;

/// An immutable cached unit.
///
/// `transfer_size` is what crosses the network or leaves persistent storage;
/// `working_size` is what the object occupies in an executor cache and what a
/// task reads from local disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataObject {
    pub id: ObjectId,
    pub transfer_size: u64,
    pub working_size: u64,
}

impl DataObject {
    pub fn new(id: ObjectId, transfer_size: u64, working_size: u64) -> Self {
        DataObject {
            id,
            transfer_size,
            working_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub required_objects: Vec<ObjectId>,
    /// Seconds of simulated compute once every input is local.
    pub compute_time: f64,
}

/// Object sizes used by the stacking experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SizePreset {
    /// Compressed image: 2MB moved, cached and worked on as 6MB.
    Gz,
    /// Uncompressed image: 6MB moved and cached.
    Fit,
    Custom {
        transfer_size: u64,
        working_size: u64,
    },
}

impl SizePreset {
    pub fn sizes(self) -> (u64, u64) {
        match self {
            SizePreset::Gz => (2 * MB, 6 * MB),
            SizePreset::Fit => (6 * MB, 6 * MB),
            SizePreset::Custom {
                transfer_size,
                working_size,
            } => (transfer_size, working_size),
        }
    }
}

/// An ordered task list over a catalog of objects.
#[derive(Debug, Clone)]
pub struct Workload {
    objects: Vec<DataObject>,
    tasks: Vec<Task>,
    locality: f64,
    slot: HashMap<ObjectId, usize>,
}

impl PartialEq for Workload {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects && self.tasks == other.tasks
    }
}

impl Workload {
    /// Validates the catalog and tasks and derives the locality.
    pub fn new(objects: Vec<DataObject>, tasks: Vec<Task>) -> Result<Self> {
        let mut slot = HashMap::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            if obj.transfer_size == 0 || obj.working_size == 0 {
                return Err(Error::config(format!("object {} has a zero size", obj.id)));
            }
            if slot.insert(obj.id, i).is_some() {
                return Err(Error::config(format!("duplicate object id {}", obj.id)));
            }
        }
        let mut seen_tasks = HashSet::with_capacity(tasks.len());
        let mut references = 0usize;
        let mut distinct = HashSet::new();
        for task in &tasks {
            if !seen_tasks.insert(task.id) {
                return Err(Error::config(format!("duplicate task id {}", task.id)));
            }
            if task.required_objects.is_empty() {
                return Err(Error::config(format!("task {} requires no objects", task.id)));
            }
            if !(task.compute_time >= 0.0 && task.compute_time.is_finite()) {
                return Err(Error::config(format!(
                    "task {} has invalid compute time {}",
                    task.id, task.compute_time
                )));
            }
            let mut within = HashSet::with_capacity(task.required_objects.len());
            for &o in &task.required_objects {
                if !slot.contains_key(&o) {
                    return Err(Error::config(format!(
                        "task {} references unknown object {o}",
                        task.id
                    )));
                }
                if !within.insert(o) {
                    return Err(Error::config(format!(
                        "task {} lists object {o} twice",
                        task.id
                    )));
                }
                distinct.insert(o);
            }
            references += task.required_objects.len();
        }
        let locality = if distinct.is_empty() {
            1.0
        } else {
            references as f64 / distinct.len() as f64
        };
        Ok(Workload {
            objects,
            tasks,
            locality,
            slot,
        })
    }

    pub fn objects(&self) -> &[DataObject] {
        &self.objects
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Mean accesses per distinct referenced object.
    pub fn locality(&self) -> f64 {
        self.locality
    }

    pub fn object(&self, id: ObjectId) -> Option<&DataObject> {
        self.slot.get(&id).map(|&i| &self.objects[i])
    }

    pub fn total_references(&self) -> usize {
        self.tasks.iter().map(|t| t.required_objects.len()).sum()
    }

    /// Per-object reference counts, in catalog order.
    pub fn reference_counts(&self) -> Vec<(ObjectId, usize)> {
        let mut counts = vec![0usize; self.objects.len()];
        for task in &self.tasks {
            for o in &task.required_objects {
                counts[self.slot[o]] += 1;
            }
        }
        self.objects.iter().map(|o| o.id).zip(counts).collect()
    }

    /// Replaces every task's compute time.
    pub fn with_compute_time(mut self, compute_time: f64) -> Self {
        for t in &mut self.tasks {
            t.compute_time = compute_time;
        }
        self
    }
}

/// Parameters for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalityWorkload {
    pub num_objects: usize,
    pub locality: f64,
    pub size: SizePreset,
    pub compute_time: f64,
    pub seed: u64,
}

/// Builds `round(num_objects * locality)` single-object tasks. Every object is
/// referenced `floor(locality)` or `ceil(locality)` times and the task order is
/// a seeded shuffle of all references.
pub fn generate(params: &LocalityWorkload) -> Result<Workload> {
    let LocalityWorkload {
        num_objects,
        locality,
        size,
        compute_time,
        seed,
    } = *params;
    if num_objects == 0 {
        return Err(Error::config("workload needs at least one object"));
    }
    if !(locality >= 1.0 && locality.is_finite()) {
        return Err(Error::config(format!("locality must be >= 1, got {locality}")));
    }
    if num_objects > u32::MAX as usize {
        return Err(Error::config("too many objects"));
    }
    let (transfer_size, working_size) = size.sizes();
    let total = (num_objects as f64 * locality).round() as usize;
    if total > u32::MAX as usize {
        return Err(Error::config("too many tasks"));
    }
    let base = total / num_objects;
    let extra = total % num_objects;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..num_objects as u32).collect();
    order.shuffle(&mut rng);
    let mut refs = Vec::with_capacity(total);
    for (rank, &obj) in order.iter().enumerate() {
        let n = if rank < extra { base + 1 } else { base };
        refs.extend(std::iter::repeat(ObjectId(obj)).take(n));
    }
    refs.shuffle(&mut rng);

    let objects = (0..num_objects as u32)
        .map(|i| DataObject::new(ObjectId(i), transfer_size, working_size))
        .collect();
    let tasks = refs
        .into_iter()
        .enumerate()
        .map(|(i, obj)| Task {
            id: TaskId(i as u32),
            required_objects: vec![obj],
            compute_time,
        })
        .collect();
    Workload::new(objects, tasks)
}

/// [`generate`] with [`DEFAULT_COMPUTE_TIME`].
pub fn generate_locality_workload(
    num_objects: usize,
    locality: f64,
    size: SizePreset,
    seed: u64,
) -> Result<Workload> {
    generate(&LocalityWorkload {
        num_objects,
        locality,
        size,
        compute_time: DEFAULT_COMPUTE_TIME,
        seed,
    })
}

/// One row of the stacking workload table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalityRow {
    pub locality: f64,
    pub num_objects: u64,
    pub num_files: u64,
}

const TABLE2: [(f64, u64, u64); 9] = [
    (1.0, 111_700, 111_700),
    (1.38, 154_345, 111_699),
    (2.0, 97_999, 49_000),
    (3.0, 88_857, 29_620),
    (4.0, 76_575, 19_145),
    (5.0, 60_590, 12_120),
    (10.0, 46_480, 4_650),
    (20.0, 40_460, 2_025),
    (30.0, 23_695, 790),
];

/// The nine locality rows behind the stacking presets, lowest locality first.
/// Scenarios use `num_files` as the object count; the cached unit is the file.
pub fn table2_presets() -> Vec<LocalityRow> {
    TABLE2
        .iter()
        .map(|&(locality, num_objects, num_files)| LocalityRow {
            locality,
            num_objects,
            num_files,
        })
        .collect()
}

/// Best achievable hit ratio when every object is missed exactly once.
pub fn ideal_cache_hit_ratio(locality: f64) -> Result<f64> {
    if !(locality >= 1.0) {
        return Err(Error::Domain(format!("locality must be >= 1, got {locality}")));
    }
    Ok(1.0 - 1.0 / locality)
}
