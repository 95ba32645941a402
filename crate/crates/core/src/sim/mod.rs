//! Deterministic discrete-event simulation: the packet engine for the
//! scheduled scheme and dispatch to the fluid baselines, behind one entry
//! point returning the common report schema.

mod engine;
mod event;

use std::sync::Arc;

use thiserror::Error;

use crate::baselines::{fluid_run, FluidPolicy};
use crate::report::RunReport;
use crate::topology::Topology;
use crate::workload::FlowTrace;
use crate::Nanos;

pub use engine::{Engine, PKT_BYTES};
pub use event::EventQueue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerMode {
    Hyline,
    BaselineFair,
    BaselineSrpt,
}

impl SchedulerMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hyline" => Some(SchedulerMode::Hyline),
            "baseline_fair" => Some(SchedulerMode::BaselineFair),
            "baseline_srpt" => Some(SchedulerMode::BaselineSrpt),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerMode::Hyline => "hyline",
            SchedulerMode::BaselineFair => "baseline_fair",
            SchedulerMode::BaselineSrpt => "baseline_srpt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Class threshold in bytes; flows at or above it are 2nd class.
    pub h_bytes: u64,
    /// Full control round trip charged for consulting the MAN.
    pub t_cost_ns: Nanos,
    /// Shared per-port buffer in packets, across both priority queues.
    pub buffer_pkts: usize,
    pub pause_pkts: usize,
    pub resume_pkts: usize,
    pub pfc_enabled: bool,
    /// Initial window in packets; sized to the BDP by default.
    pub init_window: u32,
    pub minrto_class1_ns: Nanos,
    pub minrto_class2_ns: Nanos,
    pub man_seed: u64,
    /// Run the self-checking hooks (capacity, priority, exclusivity,
    /// ordering); violations fail the run.
    pub validate: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            h_bytes: 1_000_000,
            t_cost_ns: 100_000,
            buffer_pkts: 225,
            pause_pkts: 215,
            resume_pkts: 205,
            pfc_enabled: true,
            init_window: 25,
            minrto_class1_ns: 4_000_000,
            minrto_class2_ns: 1_000_000_000,
            man_seed: 0,
            validate: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trace invalid: {0}")]
    BadTrace(String),
    #[error("deadlock: {unfinished} flows unfinished and no events pending; {detail}")]
    Deadlock { unfinished: usize, detail: String },
    #[error("invariant violations: {0:?}")]
    Invariant(Vec<String>),
}

/// Runs a trace under the selected scheme and returns the per-flow report.
/// Identical (topology, trace, mode, params) inputs produce byte-identical
/// reports.
pub fn run(
    topo: &Arc<Topology>,
    trace: &FlowTrace,
    mode: SchedulerMode,
    params: &SimParams,
) -> Result<RunReport, SimError> {
    match mode {
        SchedulerMode::Hyline => Engine::new(Arc::clone(topo), trace, params.clone())?.run(),
        SchedulerMode::BaselineFair => Ok(fluid_run(trace, topo, FluidPolicy::MaxMin, params.h_bytes)),
        SchedulerMode::BaselineSrpt => Ok(fluid_run(trace, topo, FluidPolicy::Srpt, params.h_bytes)),
    }
}
