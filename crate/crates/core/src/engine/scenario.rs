//! Scenario configuration: the runtime [`Scenario`] and its TOML file form.
//!
//! ```toml
//! schema_version = 1
//! name = "locality30_gz_128cpu"
//! seed = 7
//! warm_caches = false        # pre-populate caches before timing starts
//! read_write = false         # use the read+write persistent-store cap
//! task_overhead = 0.0        # seconds added to every task
//! arrival_interval = 0.0     # seconds between task submissions
//! bucket_width = 1.0         # throughput series resolution, seconds
//!
//! [workload]                 # either `trace = "file"` or a generated workload
//! objects = 790
//! locality = 30.0
//! size = "gz"                # gz | fit | custom (then transfer_mb, working_mb)
//! compute_time = 0.1
//!
//! [pool]                     # `executors = N` or a [pool.provisioner] table
//! executors = 128
//!
//! [cache]
//! capacity_gb = 50.0
//! policy = "lru"             # random | fifo | lru | lfu
//!
//! [dispatch]
//! policy = "max-compute-util"
//! score = "count"            # count | bytes
//!
//! [index]
//! update_interval = 1.0      # 0 applies cache updates synchronously
//!
//! [resources]                # bandwidths in Gb/s, latency in seconds
//! persistent_read_gbps = 3.4
//! persistent_rw_gbps = 1.1
//! io_servers = 8
//! local_disk_gbps = 0.469
//! peer_net_gbps = 1.0
//! transfer_latency = 0.001
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bandwidth::ResourceModel;
use crate::cache::{CacheConfig, EvictionPolicy};
use crate::error::{Error, Result};
use crate::index::DEFAULT_UPDATE_INTERVAL;
use crate::metrics::DEFAULT_BUCKET_WIDTH;
use crate::provisioner::ProvisionerConfig;
use crate::scheduler::{DispatchPolicy, ScoreMode, SchedulerConfig};
use crate::units::{GB, GBPS, MB};
use crate::workload::{self, LocalityWorkload, SizePreset, Workload, DEFAULT_COMPUTE_TIME};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PoolConfig {
    Static(usize),
    Dynamic(ProvisionerConfig),
}

/// A fully specified, reproducible simulation run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub workload: Arc<Workload>,
    pub pool: PoolConfig,
    pub cache: CacheConfig,
    pub scheduler: SchedulerConfig,
    pub resources: ResourceModel,
    pub update_interval: f64,
    pub warm_caches: bool,
    pub read_write: bool,
    pub seed: u64,
    pub task_overhead: f64,
    pub arrival_interval: f64,
    pub bucket_width: f64,
    /// Measure wall-clock decision cost. Off by default because it makes
    /// reports differ between runs.
    pub record_decision_wall_time: bool,
}

impl Scenario {
    /// A static pool with default cache, resources and index settings.
    pub fn new(name: impl Into<String>, workload: Workload, executors: usize, policy: DispatchPolicy) -> Self {
        Scenario {
            name: name.into(),
            workload: Arc::new(workload),
            pool: PoolConfig::Static(executors),
            cache: CacheConfig::default(),
            scheduler: SchedulerConfig::new(policy),
            resources: ResourceModel::default(),
            update_interval: DEFAULT_UPDATE_INTERVAL,
            warm_caches: false,
            read_write: false,
            seed: 0,
            task_overhead: 0.0,
            arrival_interval: 0.0,
            bucket_width: DEFAULT_BUCKET_WIDTH,
            record_decision_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resources.validate()?;
        match &self.pool {
            PoolConfig::Static(0) => return Err(Error::config("pool needs at least one executor")),
            PoolConfig::Static(_) => {}
            PoolConfig::Dynamic(p) => p.validate()?,
        }
        let non_negative = [
            ("update_interval", self.update_interval),
            ("task_overhead", self.task_overhead),
            ("arrival_interval", self.arrival_interval),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if !(self.bucket_width > 0.0 && self.bucket_width.is_finite()) {
            return Err(Error::config("bucket_width must be > 0"));
        }
        if self.cache.capacity == 0 {
            return Err(Error::config("cache capacity must be > 0"));
        }
        if self.scheduler.policy.is_data_aware() || self.warm_caches {
            if let Some(big) = self
                .workload
                .objects()
                .iter()
                .find(|o| o.working_size > self.cache.capacity)
            {
                return Err(Error::config(format!(
                    "object {} ({} bytes) does not fit in any executor cache ({} bytes)",
                    big.id, big.working_size, self.cache.capacity
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub warm_caches: bool,
    #[serde(default)]
    pub read_write: bool,
    #[serde(default)]
    pub task_overhead: f64,
    #[serde(default)]
    pub arrival_interval: f64,
    #[serde(default = "default_bucket_width")]
    pub bucket_width: f64,
    pub workload: WorkloadSection,
    pub pool: PoolSection,
    #[serde(default)]
    pub cache: CacheSection,
    pub dispatch: DispatchSection,
    #[serde(default)]
    pub index: IndexSection,
    #[serde(default)]
    pub resources: ResourcesSection,
}

fn default_bucket_width() -> f64 {
    DEFAULT_BUCKET_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeName {
    #[default]
    Gz,
    Fit,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    /// Trace file, relative to the scenario file. Excludes generator fields.
    pub trace: Option<String>,
    pub objects: Option<usize>,
    pub locality: Option<f64>,
    #[serde(default)]
    pub size: SizeName,
    pub transfer_mb: Option<f64>,
    pub working_mb: Option<f64>,
    /// Overrides trace compute times when set; defaults to 0.1s otherwise.
    pub compute_time: Option<f64>,
    /// Generator seed; defaults to the scenario seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub executors: Option<usize>,
    pub provisioner: Option<ProvisionerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachePolicyName {
    Random,
    Fifo,
    #[default]
    Lru,
    Lfu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheSection {
    pub capacity_gb: f64,
    pub policy: CachePolicyName,
    pub random_seed: Option<u64>,
}

impl Default for CacheSection {
    fn default() -> Self {
        CacheSection {
            capacity_gb: (CacheConfig::default().capacity / GB) as f64,
            policy: CachePolicyName::Lru,
            random_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchSection {
    pub policy: DispatchPolicy,
    #[serde(default)]
    pub score: ScoreMode,
    pub max_defer: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexSection {
    pub update_interval: f64,
}

impl Default for IndexSection {
    fn default() -> Self {
        IndexSection {
            update_interval: DEFAULT_UPDATE_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourcesSection {
    pub persistent_read_gbps: f64,
    pub persistent_rw_gbps: f64,
    pub io_servers: u32,
    pub local_disk_gbps: f64,
    pub peer_net_gbps: f64,
    pub transfer_latency: f64,
}

impl Default for ResourcesSection {
    fn default() -> Self {
        let r = ResourceModel::default();
        ResourcesSection {
            persistent_read_gbps: r.persistent_read_cap / GBPS,
            persistent_rw_gbps: r.persistent_rw_cap / GBPS,
            io_servers: r.persistent_io_servers,
            local_disk_gbps: r.local_disk_bw / GBPS,
            peer_net_gbps: r.peer_net_bw / GBPS,
            transfer_latency: r.per_transfer_latency,
        }
    }
}

impl ResourcesSection {
    pub fn model(&self) -> ResourceModel {
        ResourceModel {
            persistent_read_cap: self.persistent_read_gbps * GBPS,
            persistent_rw_cap: self.persistent_rw_gbps * GBPS,
            persistent_io_servers: self.io_servers,
            local_disk_bw: self.local_disk_gbps * GBPS,
            peer_net_bw: self.peer_net_gbps * GBPS,
            per_transfer_latency: self.transfer_latency,
        }
    }
}

/// Parameters a sweep may vary.
pub const SWEEP_AXES: [&str; 12] = [
    "locality",
    "objects",
    "executors",
    "compute_time",
    "seed",
    "update_interval",
    "cache_capacity_gb",
    "io_servers",
    "object_size_mb",
    "transfer_latency",
    "task_overhead",
    "arrival_interval",
];

impl ScenarioFile {
    /// Parses TOML, reporting the offending line on failure.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(line, e.message().to_owned())
        })?;
        if file.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::parse(
                line_of(text, "schema_version"),
                format!(
                    "unsupported scenario schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    file.schema_version
                ),
            ));
        }
        file.check().map_err(|(key, msg)| Error::parse(line_of(text, key), msg))?;
        Ok(file)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Static checks that do not need the workload; `Err` names the key.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let w = &self.workload;
        match (&w.trace, w.objects, w.locality) {
            (Some(_), None, None) => {}
            (Some(_), _, _) => {
                return Err(("trace", "`trace` excludes `objects` and `locality`".into()));
            }
            (None, Some(_), Some(_)) => {}
            (None, None, _) => return Err(("objects", "workload needs `objects` (or `trace`)".into())),
            (None, _, None) => return Err(("locality", "workload needs `locality` (or `trace`)".into())),
        }
        if w.size == SizeName::Custom && (w.transfer_mb.is_none() || w.working_mb.is_none()) {
            return Err(("size", "custom size needs `transfer_mb` and `working_mb`".into()));
        }
        if w.size != SizeName::Custom && (w.transfer_mb.is_some() || w.working_mb.is_some()) {
            return Err(("size", "`transfer_mb`/`working_mb` need size = \"custom\"".into()));
        }
        match (self.pool.executors, &self.pool.provisioner) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err((
                    "executors",
                    "pool needs exactly one of `executors` or [pool.provisioner]".into(),
                ))
            }
        }
        if !(self.cache.capacity_gb > 0.0) {
            return Err(("capacity_gb", "cache capacity must be > 0".into()));
        }
        if w.objects == Some(0) {
            return Err(("objects", "workload needs at least one object".into()));
        }
        if let Some(l) = w.locality {
            if !(l >= 1.0 && l.is_finite()) {
                return Err(("locality", format!("locality must be >= 1, got {l}")));
            }
        }
        let positive = [
            ("transfer_mb", w.transfer_mb.unwrap_or(1.0)),
            ("working_mb", w.working_mb.unwrap_or(1.0)),
            ("bucket_width", self.bucket_width),
            ("persistent_read_gbps", self.resources.persistent_read_gbps),
            ("persistent_rw_gbps", self.resources.persistent_rw_gbps),
            ("local_disk_gbps", self.resources.local_disk_gbps),
            ("peer_net_gbps", self.resources.peer_net_gbps),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((key, format!("`{key}` must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("compute_time", w.compute_time.unwrap_or(0.0)),
            ("task_overhead", self.task_overhead),
            ("arrival_interval", self.arrival_interval),
            ("update_interval", self.index.update_interval),
            ("transfer_latency", self.resources.transfer_latency),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((key, format!("`{key}` must be >= 0, got {v}")));
            }
        }
        if self.resources.io_servers == 0 {
            return Err(("io_servers", "`io_servers` must be at least 1".into()));
        }
        if self.pool.executors == Some(0) {
            return Err(("executors", "a static pool needs at least one executor".into()));
        }
        if let Some(p) = &self.pool.provisioner {
            p.validate().map_err(|e| ("provisioner", e.to_string()))?;
        }
        Ok(())
    }

    /// Resolves the workload and produces a validated [`Scenario`].
    /// Relative trace paths are taken from `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario> {
        self.check().map_err(|(_, msg)| Error::Config(msg))?;
        let w = &self.workload;
        let workload = match &w.trace {
            Some(path) => {
                let f = File::open(base_dir.join(path))?;
                let wl = workload::read_trace(BufReader::new(f))?;
                match w.compute_time {
                    Some(c) => wl.with_compute_time(c),
                    None => wl,
                }
            }
            None => {
                let size = match w.size {
                    SizeName::Gz => SizePreset::Gz,
                    SizeName::Fit => SizePreset::Fit,
                    SizeName::Custom => SizePreset::Custom {
                        transfer_size: mb_to_bytes(w.transfer_mb.unwrap_or(0.0)),
                        working_size: mb_to_bytes(w.working_mb.unwrap_or(0.0)),
                    },
                };
                workload::generate(&LocalityWorkload {
                    num_objects: w.objects.unwrap_or(0),
                    locality: w.locality.unwrap_or(0.0),
                    size,
                    compute_time: w.compute_time.unwrap_or(DEFAULT_COMPUTE_TIME),
                    seed: w.seed.unwrap_or(self.seed),
                })?
            }
        };
        let pool = match (self.pool.executors, self.pool.provisioner) {
            (Some(n), None) => PoolConfig::Static(n),
            (None, Some(p)) => PoolConfig::Dynamic(p),
            _ => unreachable!("checked above"),
        };
        let cache_seed = self.cache.random_seed.unwrap_or(self.seed);
        let policy = match self.cache.policy {
            CachePolicyName::Random => EvictionPolicy::Random { seed: cache_seed },
            CachePolicyName::Fifo => EvictionPolicy::Fifo,
            CachePolicyName::Lru => EvictionPolicy::Lru,
            CachePolicyName::Lfu => EvictionPolicy::Lfu,
        };
        let scenario = Scenario {
            name: self.name.clone(),
            workload: Arc::new(workload),
            pool,
            cache: CacheConfig {
                capacity: (self.cache.capacity_gb * GB as f64).round() as u64,
                policy,
            },
            scheduler: SchedulerConfig {
                policy: self.dispatch.policy,
                score: self.dispatch.score,
                max_defer: self.dispatch.max_defer,
            },
            resources: self.resources.model(),
            update_interval: self.index.update_interval,
            warm_caches: self.warm_caches,
            read_write: self.read_write,
            seed: self.seed,
            task_overhead: self.task_overhead,
            arrival_interval: self.arrival_interval,
            bucket_width: self.bucket_width,
            record_decision_wall_time: false,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Sets one sweepable parameter (see [`SWEEP_AXES`]).
    pub fn set_param(&mut self, axis: &str, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("{axis} needs a non-negative integer, got {v}")))
            }
        };
        match axis {
            "locality" => self.workload.locality = Some(value),
            "objects" => self.workload.objects = Some(count(value)?),
            "executors" => {
                if self.pool.provisioner.is_some() {
                    return Err(Error::config("cannot sweep executors with a dynamic pool"));
                }
                self.pool.executors = Some(count(value)?);
            }
            "compute_time" => self.workload.compute_time = Some(value),
            "seed" => self.seed = count(value)? as u64,
            "update_interval" => self.index.update_interval = value,
            "cache_capacity_gb" => self.cache.capacity_gb = value,
            "io_servers" => self.resources.io_servers = count(value)? as u32,
            "object_size_mb" => {
                self.workload.size = SizeName::Custom;
                self.workload.transfer_mb = Some(value);
                self.workload.working_mb = Some(value);
            }
            "transfer_latency" => self.resources.transfer_latency = value,
            "task_overhead" => self.task_overhead = value,
            "arrival_interval" => self.arrival_interval = value,
            _ => {
                return Err(Error::config(format!(
                    "unknown sweep axis `{axis}` (known: {})",
                    SWEEP_AXES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

fn mb_to_bytes(mb: f64) -> u64 {
    (mb * MB as f64).round() as u64
}

/// First line whose key matches; 0 when absent.
fn line_of(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            let assigns = l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='));
            let header = l.starts_with('[') && (l == format!("[{key}]") || l.ends_with(&format!(".{key}]")));
            assigns || header
        })
        .map_or(0, |i| i + 1)
}
