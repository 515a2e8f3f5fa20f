//! Queue-triggered executor allocation and idle-timeout release.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::ExecutorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationMode {
    OneAtATime,
    /// Grow straight to `max_executors`.
    AllAtOnce,
    /// Double the pool (at least one), capped at `max_executors`.
    Exponential,
}

/// What happens to a released executor's cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReleaseCachePolicy {
    #[default]
    Discard,
    /// Keep the contents aside and hand them to the next executor allocated.
    RetainUntilReuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvisionerConfig {
    pub min_executors: usize,
    pub max_executors: usize,
    pub trigger_queue_length: usize,
    pub allocation_mode: AllocationMode,
    /// Simulated seconds between an allocation and the executor being ready.
    #[serde(default = "default_startup_delay")]
    pub startup_delay: f64,
    #[serde(default = "default_idle_timeout")]
    pub idle_timeout: f64,
    #[serde(default)]
    pub release_cache_policy: ReleaseCachePolicy,
    /// Simulated seconds between provisioning decisions.
    #[serde(default = "default_evaluation_interval")]
    pub evaluation_interval: f64,
}

fn default_startup_delay() -> f64 {
    60.0
}

fn default_idle_timeout() -> f64 {
    300.0
}

fn default_evaluation_interval() -> f64 {
    1.0
}

impl ProvisionerConfig {
    pub fn fixed(executors: usize) -> Self {
        ProvisionerConfig {
            min_executors: executors,
            max_executors: executors,
            trigger_queue_length: 1,
            allocation_mode: AllocationMode::AllAtOnce,
            startup_delay: default_startup_delay(),
            idle_timeout: default_idle_timeout(),
            release_cache_policy: ReleaseCachePolicy::Discard,
            evaluation_interval: default_evaluation_interval(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_executors > self.max_executors {
            return Err(Error::config(format!(
                "min_executors ({}) exceeds max_executors ({})",
                self.min_executors, self.max_executors
            )));
        }
        if self.max_executors == 0 {
            return Err(Error::config("max_executors must be at least 1"));
        }
        if !(self.startup_delay >= 0.0 && self.startup_delay.is_finite()) {
            return Err(Error::config("startup_delay must be >= 0"));
        }
        if !(self.idle_timeout > 0.0 && self.idle_timeout.is_finite()) {
            return Err(Error::config("idle_timeout must be > 0"));
        }
        if !(self.evaluation_interval > 0.0 && self.evaluation_interval.is_finite()) {
            return Err(Error::config("evaluation_interval must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecutorPhase {
    Starting,
    Idle { since: f64 },
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolMember {
    pub id: ExecutorId,
    pub phase: ExecutorPhase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProvisionAction {
    Allocate(usize),
    Release(Vec<ExecutorId>),
}

/// Decides allocations and releases for one provisioning tick.
///
/// The pool includes executors still starting. Releases only happen when
/// the queue is below the trigger, only pick executors idle for longer than
/// `idle_timeout` (longest idle first, then lowest id), and never shrink the
/// pool below `min_executors`.
pub fn provision_evaluate(
    config: &ProvisionerConfig,
    queue_length: usize,
    pool: &[PoolMember],
    now: f64,
) -> Vec<ProvisionAction> {
    let size = pool.len();
    if size < config.min_executors {
        return vec![ProvisionAction::Allocate(config.min_executors - size)];
    }
    if queue_length > 0 && queue_length >= config.trigger_queue_length {
        if size >= config.max_executors {
            return Vec::new();
        }
        let room = config.max_executors - size;
        let n = match config.allocation_mode {
            AllocationMode::OneAtATime => 1,
            AllocationMode::AllAtOnce => room,
            AllocationMode::Exponential => size.max(1).min(room),
        };
        return vec![ProvisionAction::Allocate(n)];
    }
    let mut expired: Vec<(f64, ExecutorId)> = pool
        .iter()
        .filter_map(|m| match m.phase {
            ExecutorPhase::Idle { since } if now - since > config.idle_timeout => Some((since, m.id)),
            _ => None,
        })
        .collect();
    expired.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    expired.truncate(size - config.min_executors);
    if expired.is_empty() {
        Vec::new()
    } else {
        vec![ProvisionAction::Release(expired.into_iter().map(|(_, id)| id).collect())]
    }
}
