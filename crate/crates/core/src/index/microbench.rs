//! Wall-clock insert and lookup costs of the in-memory location index.

use std::hint::black_box;
use std::sync::RwLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LocationIndex;
use crate::ids::{ExecutorId, ObjectId};

const SYNTHETIC_EXECUTORS: u32 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrobenchReport {
    pub entries: u64,
    pub inserts: u64,
    pub lookups: u64,
    pub readers: u64,
    pub insert_ns_mean: Option<f64>,
    pub lookup_ns_mean: Option<f64>,
    pub lookups_per_sec: Option<f64>,
    pub bytes_per_entry: f64,
}

impl MicrobenchReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "entries",
        "inserts",
        "lookups",
        "readers",
        "insert_ns_mean",
        "lookup_ns_mean",
        "lookups_per_sec",
        "bytes_per_entry",
    ];
}

fn populated(num_entries: u64) -> LocationIndex {
    let mut idx = LocationIndex::with_capacity(0.0, num_entries as usize);
    for i in 0..num_entries as u32 {
        idx.add_location(ObjectId(i), ExecutorId(i % SYNTHETIC_EXECUTORS));
    }
    idx
}

fn lookup_keys(num_entries: u64, n: u64, seed: u64) -> Vec<ObjectId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| ObjectId(rng.gen_range(0..num_entries as u32)))
        .collect()
}

/// Populates an index with `num_entries` entries, then times `num_inserts`
/// fresh inserts and `num_lookups` uniformly random lookups of existing keys.
pub fn index_microbench(num_entries: u64, num_lookups: u64, num_inserts: u64) -> MicrobenchReport {
    let num_entries = num_entries.max(1);
    let mut idx = populated(num_entries);
    let keys = lookup_keys(num_entries, num_lookups, 0x5eed);

    let start = Instant::now();
    for i in 0..num_inserts as u32 {
        idx.add_location(ObjectId(num_entries as u32 + i), ExecutorId(i % SYNTHETIC_EXECUTORS));
    }
    let insert_ns = start.elapsed().as_nanos() as f64;

    let start = Instant::now();
    let mut found = 0usize;
    for &k in &keys {
        found += black_box(idx.locate(black_box(k))).len();
    }
    let lookup_ns = start.elapsed().as_nanos() as f64;
    black_box(found);

    let (lookup_ns_mean, lookups_per_sec) = if num_lookups > 0 {
        let mean = lookup_ns / num_lookups as f64;
        (Some(mean), Some(num_lookups as f64 / (lookup_ns.max(1.0) * 1e-9)))
    } else {
        (None, None)
    };
    MicrobenchReport {
        entries: num_entries,
        inserts: num_inserts,
        lookups: num_lookups,
        readers: 1,
        insert_ns_mean: (num_inserts > 0).then(|| insert_ns / num_inserts as f64),
        lookup_ns_mean,
        lookups_per_sec,
        bytes_per_entry: idx.approx_bytes_per_entry(),
    }
}

/// Contended variant: `readers` threads each perform `lookups_per_reader`
/// lookups through a shared read lock while one writer inserts
/// `num_inserts` new entries.
pub fn index_microbench_concurrent(
    num_entries: u64,
    lookups_per_reader: u64,
    readers: u64,
    num_inserts: u64,
) -> MicrobenchReport {
    let num_entries = num_entries.max(1);
    let readers = readers.max(1);
    let idx = RwLock::new(populated(num_entries));
    let (insert_ns, lookup_ns) = std::thread::scope(|s| {
        let writer = s.spawn(|| {
            let start = Instant::now();
            for i in 0..num_inserts as u32 {
                let mut w = idx.write().unwrap();
                w.add_location(ObjectId(num_entries as u32 + i), ExecutorId(i % SYNTHETIC_EXECUTORS));
            }
            start.elapsed().as_nanos() as f64
        });
        let start = Instant::now();
        let handles: Vec<_> = (0..readers)
            .map(|r| {
                let idx = &idx;
                s.spawn(move || {
                    let keys = lookup_keys(num_entries, lookups_per_reader, 0x5eed + r);
                    let mut found = 0usize;
                    for &k in &keys {
                        found += idx.read().unwrap().locate(k).len();
                    }
                    black_box(found)
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let lookup_ns = start.elapsed().as_nanos() as f64;
        (writer.join().unwrap(), lookup_ns)
    });
    let total_lookups = lookups_per_reader * readers;
    let idx = idx.into_inner().unwrap();
    MicrobenchReport {
        entries: num_entries,
        inserts: num_inserts,
        lookups: total_lookups,
        readers,
        insert_ns_mean: (num_inserts > 0).then(|| insert_ns / num_inserts as f64),
        lookup_ns_mean: (total_lookups > 0).then(|| lookup_ns * readers as f64 / total_lookups as f64),
        lookups_per_sec: (total_lookups > 0)
            .then(|| total_lookups as f64 / (lookup_ns.max(1.0) * 1e-9)),
        bytes_per_entry: idx.approx_bytes_per_entry(),
    }
}
