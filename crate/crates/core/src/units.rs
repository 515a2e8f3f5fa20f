//! Byte, bandwidth and time conventions used throughout the crate.
//!
//! Sizes are integral bytes, bandwidths are `f64` bits per second and
//! simulated time is `f64` seconds. Megabytes are decimal (10^6 bytes).

pub const KB: u64 = 1_000;
pub const MB: u64 = 1_000_000;
pub const GB: u64 = 1_000_000_000;

pub const MBPS: f64 = 1e6;
pub const GBPS: f64 = 1e9;

/// Seconds needed to move `bytes` at `bits_per_sec`.
#[inline]
pub fn transfer_secs(bytes: u64, bits_per_sec: f64) -> f64 {
    bytes as f64 * 8.0 / bits_per_sec
}

#[inline]
pub fn to_mb(bytes: f64) -> f64 {
    bytes / MB as f64
}
