//! HyLine: hybrid centralized/distributed flow scheduling for multipath
//! datacenter fabrics.
//!
//! Small (1st-class) flows bypass the control plane entirely: they are tagged
//! into the high-priority queue of every switch and sent at line rate, load
//! balanced with flow-based ECMP. Large (2nd-class) flows ask a logically
//! centralized manager (the MAN) for permission; the MAN places each one on a
//! whole path at line rate, preempting lower-priority flows only when the
//! path-aware cost model says preemption lowers total completion time.
//!
//! The crate contains the scheduler itself ([`scheduler`]), the threshold-band
//! analysis separating the two classes ([`threshold`]), fat-tree topologies
//! ([`topology`]), workload generation ([`workload`]), a deterministic
//! packet-level simulator with dual-priority queues and PFC ([`sim`]), two
//! idealized fluid baselines ([`baselines`]), and evaluation metrics
//! ([`metrics`]).

pub mod baselines;
pub mod config;
pub mod metrics;
pub mod report;
pub mod scheduler;
pub mod sim;
pub mod threshold;
pub mod topology;
pub mod workload;

pub use report::{FlowRecord, RunMeta, RunReport};
pub use scheduler::{FlowRequest, ManMessage, Manager, PathEvaluation};
pub use topology::{Link, LinkId, NodeId, Path, Topology};

/// Simulation clock in integer nanoseconds. All packet-level timing is exact
/// integer arithmetic so that runs are bit-reproducible.
pub type Nanos = u64;

/// Flow identifiers are assigned by trace order and never reused.
pub type FlowId = u64;

/// Priority class of a flow, decided by its size against the threshold H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FlowClass {
    /// Latency-sensitive flows below the threshold: high-priority queue,
    /// sent immediately at line rate, never consult the MAN.
    First,
    /// Bandwidth-hungry flows at or above the threshold: low-priority queue,
    /// stop-and-go scheduled by the MAN.
    Second,
}

impl FlowClass {
    pub fn as_u8(self) -> u8 {
        match self {
            FlowClass::First => 1,
            FlowClass::Second => 2,
        }
    }
}

/// A flow is 1st class iff its size is strictly below the threshold.
pub fn classify(size_bytes: u64, h_bytes: u64) -> FlowClass {
    if size_bytes < h_bytes {
        FlowClass::First
    } else {
        FlowClass::Second
    }
}

/// Serialization time of `bytes` on a link of `bps`, rounded up to whole ns.
pub fn serialization_ns(bytes: u64, bps: u64) -> Nanos {
    let num = bytes as u128 * 8_000_000_000u128;
    num.div_ceil(bps as u128) as u64
}

/// Bytes transferred at `bps` during `elapsed` nanoseconds, rounded down.
pub fn bytes_in(elapsed: Nanos, bps: u64) -> u64 {
    (elapsed as u128 * bps as u128 / 8_000_000_000u128) as u64
}

/// Synthetic transport ports for a flow, stable across runs. Feeds the ECMP
/// hash so distinct flows between one host pair can take different paths.
pub fn flow_ports(flow_id: FlowId) -> (u16, u16) {
    let mut h = flow_id.wrapping_add(0x9e3779b97f4a7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    (1024 + (h as u16 % 50_000), 1024 + ((h >> 16) as u16 % 50_000))
}
