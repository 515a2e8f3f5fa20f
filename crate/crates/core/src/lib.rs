//! Simulation of data diffusion: task dispatch that follows cached data,
//! executor caches, a loosely coherent location index, dynamic resource
//! provisioning and tiered storage bandwidth.

pub mod cache;
pub mod engine;
pub mod error;
pub mod ids;
pub mod index;
pub mod metrics;
pub mod provisioner;
pub mod scheduler;
pub mod units;
pub mod workload;

pub use cache::{Cache, CacheConfig, CacheError, EvictionPolicy, Lookup};
pub use engine::{run, run_with_log, LogRecord, ResourceModel, Scenario, ScenarioFile, Simulation};
pub use error::{Error, Result};
pub use ids::{ExecutorId, ObjectId, TaskId};
pub use index::{IndexUpdate, LocationIndex};
pub use metrics::{hit_ratio, per_task_data_movement, ExportFormat, MetricsReport, ReportSummary, Tier};
pub use provisioner::{AllocationMode, ProvisionerConfig, ReleaseCachePolicy};
pub use scheduler::{DispatchDecision, DispatchPolicy, Scheduler, SchedulerConfig, WaitQueue};
pub use workload::{DataObject, SizePreset, Task, Workload};
