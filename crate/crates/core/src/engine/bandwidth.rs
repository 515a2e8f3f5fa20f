//! Tiered storage and network model with processor-sharing transfers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::ExecutorId;
use crate::units::GBPS;

/// Bandwidths are bits per second; latency is seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    /// Aggregate read bandwidth of the shared persistent store.
    pub persistent_read_cap: f64,
    /// Aggregate bandwidth of the store under mixed read+write traffic.
    pub persistent_rw_cap: f64,
    /// Number of store I/O servers. Fewer concurrent transfers than this
    /// cannot saturate the store.
    pub persistent_io_servers: u32,
    /// Per-executor local disk bandwidth.
    pub local_disk_bw: f64,
    /// Per-executor network link bandwidth, each direction.
    pub peer_net_bw: f64,
    /// Setup cost of every network transfer (peer or persistent).
    pub per_transfer_latency: f64,
}

impl Default for ResourceModel {
    fn default() -> Self {
        ResourceModel {
            persistent_read_cap: 3.4 * GBPS,
            persistent_rw_cap: 1.1 * GBPS,
            persistent_io_servers: 8,
            // 76Gb/s aggregate over 162 nodes
            local_disk_bw: 76.0 * GBPS / 162.0,
            peer_net_bw: 1.0 * GBPS,
            per_transfer_latency: 0.001,
        }
    }
}

impl ResourceModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("persistent_read_cap", self.persistent_read_cap),
            ("persistent_rw_cap", self.persistent_rw_cap),
            ("local_disk_bw", self.local_disk_bw),
            ("peer_net_bw", self.peer_net_bw),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be a positive bandwidth")));
            }
        }
        if self.persistent_io_servers == 0 {
            return Err(Error::config("persistent_io_servers must be at least 1"));
        }
        if !(self.per_transfer_latency >= 0.0 && self.per_transfer_latency.is_finite()) {
            return Err(Error::config("per_transfer_latency must be >= 0"));
        }
        Ok(())
    }

    /// Persistent-store cap for the chosen traffic mix.
    pub fn persistent_cap(&self, read_write: bool) -> f64 {
        if read_write {
            self.persistent_rw_cap
        } else {
            self.persistent_read_cap
        }
    }

    /// Rate of one persistent fetch while `active` fetches are in flight.
    /// The receiving executor's disk also bounds it.
    pub fn persistent_rate(&self, active: usize, read_write: bool) -> f64 {
        shared_bandwidth_share(active, self.persistent_cap(read_write), self.persistent_io_servers)
            .min(self.local_disk_bw)
    }

    /// Rate of one peer fetch while the serving executor has `active`
    /// outbound transfers. The receiver's inbound link carries at most one.
    pub fn peer_rate(&self, active: usize) -> f64 {
        self.peer_net_bw / active.max(1) as f64
    }
}

/// Fair share of a globally capped store among `active_transfers`, with a
/// per-transfer ceiling of `cap / io_servers` so that aggregate throughput
/// ramps linearly until `io_servers` transfers are active.
pub fn shared_bandwidth_share(active_transfers: usize, cap: f64, io_servers: u32) -> f64 {
    cap / active_transfers.max(io_servers.max(1) as usize) as f64
}

/// Which shared resource a network transfer contends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Channel {
    Persistent,
    PeerOut(ExecutorId),
}

#[derive(Debug, Clone)]
pub(crate) struct Flow {
    pub(crate) token: u64,
    pub(crate) receiver: ExecutorId,
    pub(crate) remaining: f64,
}

/// Transfers sharing one channel. Every member runs at the same rate, so the
/// next completion is the flow with the least remaining bytes.
#[derive(Debug, Clone, Default)]
pub(crate) struct FlowGroup {
    pub(crate) flows: Vec<Flow>,
    /// Bytes per second for each member.
    pub(crate) rate: f64,
    pub(crate) last_update: f64,
    pub(crate) generation: u64,
}

/// Leftover bytes below which a transfer counts as complete.
const DONE_EPSILON: f64 = 1e-3;

impl FlowGroup {
    /// Moves every member forward to `now`. Returns bytes moved in total.
    pub(crate) fn advance(&mut self, now: f64) -> f64 {
        let dt = now - self.last_update;
        self.last_update = now;
        if dt <= 0.0 || self.flows.is_empty() {
            return 0.0;
        }
        let step = self.rate * dt;
        let mut moved = 0.0;
        for f in &mut self.flows {
            let d = step.min(f.remaining);
            f.remaining -= d;
            moved += d;
        }
        moved
    }

    /// Removes finished flows. If rounding leaves none finished the smallest
    /// one is taken, since callers only ask when a completion is due.
    pub(crate) fn take_finished(&mut self) -> Vec<Flow> {
        let mut done = Vec::new();
        let mut i = 0;
        while i < self.flows.len() {
            if self.flows[i].remaining <= DONE_EPSILON {
                done.push(self.flows.remove(i));
            } else {
                i += 1;
            }
        }
        if done.is_empty() && !self.flows.is_empty() {
            let (pos, _) = self
                .flows
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.remaining.total_cmp(&b.1.remaining).then(a.1.token.cmp(&b.1.token)))
                .expect("non-empty");
            done.push(self.flows.remove(pos));
        }
        done
    }

    pub(crate) fn next_completion(&self, now: f64) -> Option<f64> {
        let min = self
            .flows
            .iter()
            .map(|f| f.remaining)
            .min_by(f64::total_cmp)?;
        Some(now + min / self.rate)
    }

    pub(crate) fn aggregate_rate(&self) -> f64 {
        self.rate * self.flows.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn share_below_knee_is_per_server_ceiling() {
        let cap = 3.4 * GBPS;
        assert!((shared_bandwidth_share(1, cap, 8) - 0.425 * GBPS).abs() < 1.0);
    }

    #[test]
    fn share_at_knee_saturates() {
        let cap = 3.4 * GBPS;
        let each = shared_bandwidth_share(8, cap, 8);
        assert!((each - 0.425 * GBPS).abs() < 1.0);
        assert!((each * 8.0 - cap).abs() < 1.0);
    }

    #[test]
    fn share_beyond_knee_conserves_cap() {
        let cap = 3.4 * GBPS;
        let each = shared_bandwidth_share(64, cap, 8);
        assert!((each - 0.053125 * GBPS).abs() < 1.0);
        assert!((each * 64.0 - cap).abs() < 1.0);
    }

    #[test]
    fn aggregate_never_exceeds_cap() {
        let cap = 3.4 * GBPS;
        for servers in 1..16 {
            for k in 1..200 {
                assert!(shared_bandwidth_share(k, cap, servers) * k as f64 <= cap * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn defaults_validate() {
        let r = ResourceModel::default();
        r.validate().unwrap();
        assert!((r.local_disk_bw - 0.469 * GBPS).abs() < 0.001 * GBPS);
        let bad = ResourceModel {
            peer_net_bw: 0.0,
            ..r
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn group_completes_smallest_first() {
        let mut g = FlowGroup {
            rate: 10.0,
            ..Default::default()
        };
        g.flows.push(Flow { token: 1, receiver: ExecutorId(0), remaining: 30.0 });
        g.flows.push(Flow { token: 2, receiver: ExecutorId(1), remaining: 10.0 });
        let t = g.next_completion(0.0).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(g.advance(t), 20.0);
        let done = g.take_finished();
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].token, 2);
        assert_eq!(g.flows[0].remaining, 20.0);
    }
}
