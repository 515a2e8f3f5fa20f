//! Shared fixtures for the criterion benchmarks.

use std::path::Path;

use diffuse_core::engine::preset;
use diffuse_core::{ExecutorId, LocationIndex, ObjectId, Result, Scenario};

/// Synchronous index with `entries` objects spread round-robin over `executors`.
pub fn populated_index(entries: u32, executors: u32) -> LocationIndex {
    let mut index = LocationIndex::with_capacity(0.0, entries as usize);
    for i in 0..entries {
        index.add_location(ObjectId(i), ExecutorId(i % executors));
    }
    index
}

/// A preset shrunk to `objects` objects so one run takes milliseconds.
pub fn small_preset(name: &str, objects: f64) -> Result<Scenario> {
    let mut file = preset(name)?;
    file.set_param("objects", objects)?;
    file.build(Path::new("."))
}
