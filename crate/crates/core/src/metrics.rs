//! Per-run measurements and the derived quantities reported for each
//! experiment: hit ratios, per-tier bytes and throughput, per-task data
//! movement and normalized time per task.
//!
//! A [`MetricsReport`] serializes to JSON (full report, including series) or
//! to a single CSV row of scalar fields ([`ReportSummary`]). Both carry
//! `schema_version`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{to_mb, GBPS};

pub const SCHEMA_VERSION: u32 = 1;

/// Throughput bucket width used when a scenario does not choose one.
pub const DEFAULT_BUCKET_WIDTH: f64 = 1.0;

/// Where an object access was served from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Local,
    Peer,
    Persistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputBucket {
    pub start: f64,
    pub local_bps: f64,
    pub peer_bps: f64,
    pub persistent_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSample {
    pub time: f64,
    pub pool: u64,
    pub queue: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionStats {
    pub count: u64,
    /// Total rounds tasks spent deferred before dispatch.
    pub deferrals: u64,
    pub score_mean: f64,
    pub score_max: u64,
    pub index_lookups_mean: f64,
    pub index_lookups_max: u64,
    /// Wall-clock cost of a decision. Only present when requested, since it
    /// makes reports machine-dependent.
    pub wall_ns_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub executors_peak: u64,
    pub tasks_total: u64,
    pub tasks_completed: u64,
    pub makespan: f64,
    pub accesses: u64,
    pub cache_hits_local: u64,
    pub cache_hits_peer: u64,
    pub cache_misses: u64,
    pub bytes_local: u64,
    pub bytes_peer: u64,
    pub bytes_persistent: u64,
    pub evictions: u64,
    pub stale_hints: u64,
    /// Integral of pool size over time.
    pub executor_seconds: f64,
    pub time_per_task_per_cpu: f64,
    /// Highest instantaneous aggregate persistent-store rate, bits/s.
    pub peak_persistent_bps: f64,
    pub decisions: DecisionStats,
    pub bucket_width: f64,
    pub throughput_series: Vec<ThroughputBucket>,
    pub pool_size_series: Vec<PoolSample>,
}

/// Per-task megabytes moved from each tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataMovement {
    pub persistent_mb: f64,
    pub peer_mb: f64,
    pub local_mb: f64,
}

/// `(hits_local + hits_peer) / accesses`, absent when nothing was accessed.
pub fn hit_ratio(report: &MetricsReport) -> Option<f64> {
    (report.accesses > 0)
        .then(|| (report.cache_hits_local + report.cache_hits_peer) as f64 / report.accesses as f64)
}

pub fn per_task_data_movement(report: &MetricsReport) -> Option<DataMovement> {
    let n = report.tasks_completed;
    (n > 0).then(|| DataMovement {
        persistent_mb: to_mb(report.bytes_persistent as f64) / n as f64,
        peer_mb: to_mb(report.bytes_peer as f64) / n as f64,
        local_mb: to_mb(report.bytes_local as f64) / n as f64,
    })
}

impl MetricsReport {
    /// Average rate of a tier over the makespan, bits/s.
    pub fn aggregate_bps(&self, tier: Tier) -> f64 {
        if self.makespan <= 0.0 {
            return 0.0;
        }
        let bytes = match tier {
            Tier::Local => self.bytes_local,
            Tier::Peer => self.bytes_peer,
            Tier::Persistent => self.bytes_persistent,
        };
        bytes as f64 * 8.0 / self.makespan
    }

    /// Bytes recovered by integrating the throughput series of one tier.
    pub fn series_bytes(&self, tier: Tier) -> f64 {
        self.throughput_series
            .iter()
            .map(|b| match tier {
                Tier::Local => b.local_bps,
                Tier::Peer => b.peer_bps,
                Tier::Persistent => b.persistent_bps,
            })
            .sum::<f64>()
            * self.bucket_width
            / 8.0
    }

    pub fn summary(&self) -> ReportSummary {
        let moved = per_task_data_movement(self);
        ReportSummary {
            schema_version: self.schema_version,
            scenario: self.scenario.clone(),
            policy: self.policy.clone(),
            seed: self.seed,
            executors_peak: self.executors_peak,
            tasks_total: self.tasks_total,
            tasks_completed: self.tasks_completed,
            makespan: self.makespan,
            accesses: self.accesses,
            cache_hits_local: self.cache_hits_local,
            cache_hits_peer: self.cache_hits_peer,
            cache_misses: self.cache_misses,
            hit_ratio: hit_ratio(self),
            bytes_local: self.bytes_local,
            bytes_peer: self.bytes_peer,
            bytes_persistent: self.bytes_persistent,
            persistent_mb_per_task: moved.map(|m| m.persistent_mb),
            peer_mb_per_task: moved.map(|m| m.peer_mb),
            local_mb_per_task: moved.map(|m| m.local_mb),
            local_gbps: self.aggregate_bps(Tier::Local) / GBPS,
            peer_gbps: self.aggregate_bps(Tier::Peer) / GBPS,
            persistent_gbps: self.aggregate_bps(Tier::Persistent) / GBPS,
            peak_persistent_gbps: self.peak_persistent_bps / GBPS,
            time_per_task_per_cpu: self.time_per_task_per_cpu,
            executor_seconds: self.executor_seconds,
            evictions: self.evictions,
            stale_hints: self.stale_hints,
            decisions: self.decisions.count,
            deferrals: self.decisions.deferrals,
            decision_score_mean: self.decisions.score_mean,
            decision_lookups_mean: self.decisions.index_lookups_mean,
            decision_wall_ns_mean: self.decisions.wall_ns_mean,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: MetricsReport = serde_json::from_str(s)
            .map_err(|e| Error::parse(e.line(), e.to_string()))?;
        check_version(report.schema_version)?;
        Ok(report)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::parse(0, format!("unsupported report schema version {v}")));
    }
    Ok(())
}

/// Scalar fields of a report, one CSV row per run. Column order is the
/// field order below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub executors_peak: u64,
    pub tasks_total: u64,
    pub tasks_completed: u64,
    pub makespan: f64,
    pub accesses: u64,
    pub cache_hits_local: u64,
    pub cache_hits_peer: u64,
    pub cache_misses: u64,
    pub hit_ratio: Option<f64>,
    pub bytes_local: u64,
    pub bytes_peer: u64,
    pub bytes_persistent: u64,
    pub persistent_mb_per_task: Option<f64>,
    pub peer_mb_per_task: Option<f64>,
    pub local_mb_per_task: Option<f64>,
    pub local_gbps: f64,
    pub peer_gbps: f64,
    pub persistent_gbps: f64,
    pub peak_persistent_gbps: f64,
    pub time_per_task_per_cpu: f64,
    pub executor_seconds: f64,
    pub evictions: u64,
    pub stale_hints: u64,
    pub decisions: u64,
    pub deferrals: u64,
    pub decision_score_mean: f64,
    pub decision_lookups_mean: f64,
    pub decision_wall_ns_mean: Option<f64>,
}

impl ReportSummary {
    pub fn write_csv<W: Write>(rows: &[ReportSummary], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if rows.is_empty() {
            w.write_record(summary_columns()).map_err(csv_err)?;
        }
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportSummary>> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize::<ReportSummary>().enumerate() {
            let row = rec.map_err(|e| Error::parse(i + 2, e.to_string()))?;
            check_version(row.schema_version)?;
            rows.push(row);
        }
        Ok(rows)
    }
}

/// CSV column names of [`ReportSummary`], in order.
pub fn summary_columns() -> Vec<&'static str> {
    vec![
        "schema_version",
        "scenario",
        "policy",
        "seed",
        "executors_peak",
        "tasks_total",
        "tasks_completed",
        "makespan",
        "accesses",
        "cache_hits_local",
        "cache_hits_peer",
        "cache_misses",
        "hit_ratio",
        "bytes_local",
        "bytes_peer",
        "bytes_persistent",
        "persistent_mb_per_task",
        "peer_mb_per_task",
        "local_mb_per_task",
        "local_gbps",
        "peer_gbps",
        "persistent_gbps",
        "peak_persistent_gbps",
        "time_per_task_per_cpu",
        "executor_seconds",
        "evictions",
        "stale_hints",
        "decisions",
        "deferrals",
        "decision_score_mean",
        "decision_lookups_mean",
        "decision_wall_ns_mean",
    ]
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serialize(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

pub fn export(report: &MetricsReport, format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::Json => report.to_json(),
        ExportFormat::Csv => {
            let mut buf = Vec::new();
            ReportSummary::write_csv(std::slice::from_ref(&report.summary()), &mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
        }
    }
}

/// Accumulates measurements during one simulation.
#[derive(Debug, Clone)]
pub(crate) struct MetricsCollector {
    pub(crate) accesses: u64,
    pub(crate) hits_local: u64,
    pub(crate) hits_peer: u64,
    pub(crate) misses: u64,
    pub(crate) bytes_local: u64,
    pub(crate) bytes_peer: u64,
    pub(crate) bytes_persistent: u64,
    pub(crate) evictions: u64,
    pub(crate) stale_hints: u64,
    pub(crate) peak_persistent_bps: f64,
    bucket_width: f64,
    // bytes per bucket: [local, peer, persistent]
    buckets: Vec<[f64; 3]>,
    decisions: u64,
    deferrals: u64,
    score_sum: u64,
    score_max: u64,
    lookups_sum: u64,
    lookups_max: u64,
    wall_ns_sum: f64,
    wall_ns_count: u64,
    pool_series: Vec<PoolSample>,
    executor_seconds: f64,
    last_pool: Option<(f64, u64)>,
}

impl MetricsCollector {
    pub(crate) fn new(bucket_width: f64) -> Self {
        MetricsCollector {
            accesses: 0,
            hits_local: 0,
            hits_peer: 0,
            misses: 0,
            bytes_local: 0,
            bytes_peer: 0,
            bytes_persistent: 0,
            evictions: 0,
            stale_hints: 0,
            peak_persistent_bps: 0.0,
            bucket_width,
            buckets: Vec::new(),
            decisions: 0,
            deferrals: 0,
            score_sum: 0,
            score_max: 0,
            lookups_sum: 0,
            lookups_max: 0,
            wall_ns_sum: 0.0,
            wall_ns_count: 0,
            pool_series: Vec::new(),
            executor_seconds: 0.0,
            last_pool: None,
        }
    }

    /// Classifies one object access by the tier that supplied it.
    pub(crate) fn record_access(&mut self, tier: Tier, fetched_bytes: u64) {
        self.accesses += 1;
        match tier {
            Tier::Local => self.hits_local += 1,
            Tier::Peer => {
                self.hits_peer += 1;
                self.bytes_peer += fetched_bytes;
            }
            Tier::Persistent => {
                self.misses += 1;
                self.bytes_persistent += fetched_bytes;
            }
        }
    }

    pub(crate) fn record_local_read(&mut self, bytes: u64) {
        self.bytes_local += bytes;
    }

    /// Spreads `rate` bytes/s over `[t0, t1)` into the throughput buckets.
    pub(crate) fn add_segment(&mut self, tier: Tier, t0: f64, t1: f64, rate: f64) {
        if !(t1 > t0) || rate <= 0.0 {
            return;
        }
        let slot = match tier {
            Tier::Local => 0,
            Tier::Peer => 1,
            Tier::Persistent => 2,
        };
        let w = self.bucket_width;
        let first = (t0 / w).floor() as usize;
        let last = (t1 / w).floor() as usize;
        if self.buckets.len() <= last {
            self.buckets.resize(last + 1, [0.0; 3]);
        }
        for b in first..=last {
            let lo = t0.max(b as f64 * w);
            let hi = t1.min((b + 1) as f64 * w);
            if hi > lo {
                self.buckets[b][slot] += rate * (hi - lo);
            }
        }
    }

    pub(crate) fn note_persistent_rate(&mut self, bits_per_sec: f64) {
        if bits_per_sec > self.peak_persistent_bps {
            self.peak_persistent_bps = bits_per_sec;
        }
    }

    pub(crate) fn record_decision(&mut self, score: u64, lookups: u32, deferrals: u32, wall_ns: Option<f64>) {
        self.decisions += 1;
        self.deferrals += deferrals as u64;
        self.score_sum += score;
        self.score_max = self.score_max.max(score);
        self.lookups_sum += lookups as u64;
        self.lookups_max = self.lookups_max.max(lookups as u64);
        if let Some(ns) = wall_ns {
            self.wall_ns_sum += ns;
            self.wall_ns_count += 1;
        }
    }

    pub(crate) fn record_pool(&mut self, time: f64, pool: u64, queue: u64) {
        if let Some((t, p)) = self.last_pool {
            self.executor_seconds += (time - t) * p as f64;
        }
        self.last_pool = Some((time, pool));
        if let Some(last) = self.pool_series.last() {
            if last.pool == pool && last.queue == queue {
                return;
            }
        }
        self.pool_series.push(PoolSample { time, pool, queue });
    }

    pub(crate) fn finish(mut self, head: ReportHead, makespan: f64) -> MetricsReport {
        if let Some((t, p)) = self.last_pool {
            self.executor_seconds += (makespan - t).max(0.0) * p as f64;
        }
        let w = self.bucket_width;
        let throughput_series = self
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| ThroughputBucket {
                start: i as f64 * w,
                local_bps: b[0] * 8.0 / w,
                peer_bps: b[1] * 8.0 / w,
                persistent_bps: b[2] * 8.0 / w,
            })
            .collect();
        let n = self.decisions.max(1) as f64;
        let time_per_task_per_cpu = if head.tasks_completed > 0 {
            self.executor_seconds / head.tasks_completed as f64
        } else {
            0.0
        };
        MetricsReport {
            schema_version: SCHEMA_VERSION,
            scenario: head.scenario,
            policy: head.policy,
            seed: head.seed,
            executors_peak: head.executors_peak,
            tasks_total: head.tasks_total,
            tasks_completed: head.tasks_completed,
            makespan,
            accesses: self.accesses,
            cache_hits_local: self.hits_local,
            cache_hits_peer: self.hits_peer,
            cache_misses: self.misses,
            bytes_local: self.bytes_local,
            bytes_peer: self.bytes_peer,
            bytes_persistent: self.bytes_persistent,
            evictions: self.evictions,
            stale_hints: self.stale_hints,
            executor_seconds: self.executor_seconds,
            time_per_task_per_cpu,
            peak_persistent_bps: self.peak_persistent_bps,
            decisions: DecisionStats {
                count: self.decisions,
                deferrals: self.deferrals,
                score_mean: self.score_sum as f64 / n,
                score_max: self.score_max,
                index_lookups_mean: self.lookups_sum as f64 / n,
                index_lookups_max: self.lookups_max,
                wall_ns_mean: (self.wall_ns_count > 0)
                    .then(|| self.wall_ns_sum / self.wall_ns_count as f64),
            },
            bucket_width: w,
            throughput_series,
            pool_size_series: self.pool_series,
        }
    }
}

pub(crate) struct ReportHead {
    pub(crate) scenario: String,
    pub(crate) policy: String,
    pub(crate) seed: u64,
    pub(crate) executors_peak: u64,
    pub(crate) tasks_total: u64,
    pub(crate) tasks_completed: u64,
}
