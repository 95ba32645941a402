//! Idealized fluid comparators: per-link max-min fair sharing (a TCP
//! idealization) and per-link SRPT with ECMP path pinning (a single-link
//! optimal scheduler stretched over paths).
//!
//! Both are fluid: no packets, no propagation, no control latency. Rates are
//! piecewise constant between arrivals and departures, so the runs are exact
//! event-driven integrations. Their FCTs are optimistic lower bounds and all
//! comparisons against them are directional only.

use crate::report::{FlowRecord, RunMeta, RunReport};
use crate::topology::{LinkId, Topology};
use crate::workload::FlowTrace;
use crate::{classify, flow_ports};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidPolicy {
    /// Water-filling max-min fairness across all active flows.
    MaxMin,
    /// Each link devotes its full capacity to the smallest-remaining flow
    /// crossing it; a flow progresses only while it is top on every link of
    /// its path.
    Srpt,
}

impl FluidPolicy {
    pub fn scheme_name(&self) -> &'static str {
        match self {
            FluidPolicy::MaxMin => "baseline_fair",
            FluidPolicy::Srpt => "baseline_srpt",
        }
    }
}

struct ActiveFlow {
    trace_idx: usize,
    remaining_bytes: f64,
    links: Vec<LinkId>,
    rate_bps: f64,
    started_at: Option<f64>,
    stopped_s: f64,
    preemptions: u32,
}

const DONE_EPS_BYTES: f64 = 1e-3;

/// Runs the trace to completion under a fluid policy. `h_bytes` only labels
/// the class column of the report.
pub fn fluid_run(
    trace: &FlowTrace,
    topo: &Topology,
    policy: FluidPolicy,
    h_bytes: u64,
) -> RunReport {
    let mut records: Vec<Option<FlowRecord>> = vec![None; trace.len()];
    let mut active: Vec<ActiveFlow> = Vec::new();
    let mut t = 0.0f64;
    let mut next_arrival = 0usize;
    let mut events = 0u64;

    loop {
        // Next completion among flows with positive rate.
        let mut completer: Option<(usize, f64)> = None;
        for (i, f) in active.iter().enumerate() {
            if f.rate_bps > 0.0 {
                let eta = t + f.remaining_bytes * 8.0 / f.rate_bps;
                if completer.map(|(_, best)| eta < best).unwrap_or(true) {
                    completer = Some((i, eta));
                }
            }
        }
        let arrival_t = trace
            .flows
            .get(next_arrival)
            .map(|f| f.arrival_ns as f64 / 1e9);

        let (advance_to, is_arrival) = match (completer, arrival_t) {
            (Some((_, tc)), Some(ta)) if ta < tc => (ta, true),
            (Some((_, tc)), _) => (tc, false),
            (None, Some(ta)) => (ta, true),
            (None, None) => break,
        };

        let dt = advance_to - t;
        for f in active.iter_mut() {
            f.remaining_bytes -= f.rate_bps * dt / 8.0;
            if f.started_at.is_some() && f.rate_bps == 0.0 {
                f.stopped_s += dt;
            }
        }
        t = advance_to;
        events += 1;

        if is_arrival {
            let tf = &trace.flows[next_arrival];
            let paths = topo
                .enumerate_paths(tf.src, tf.dst)
                .expect("trace endpoints must exist");
            let (sp, dp) = flow_ports(next_arrival as u64);
            let path = topo.ecmp_select((tf.src, tf.dst, sp, dp), &paths);
            active.push(ActiveFlow {
                trace_idx: next_arrival,
                remaining_bytes: tf.bytes as f64,
                links: path.links.clone(),
                rate_bps: 0.0,
                started_at: None,
                stopped_s: 0.0,
                preemptions: 0,
            });
            next_arrival += 1;
        } else if let Some((idx, _)) = completer {
            active[idx].remaining_bytes = 0.0;
        }

        // Retire everything that has finished.
        let mut i = 0;
        while i < active.len() {
            if active[i].remaining_bytes <= DONE_EPS_BYTES {
                let f = active.swap_remove(i);
                let tf = &trace.flows[f.trace_idx];
                let arrival_s = tf.arrival_ns as f64 / 1e9;
                let start_s = f.started_at.unwrap_or(t);
                records[f.trace_idx] = Some(FlowRecord {
                    flow_id: f.trace_idx as u64,
                    class: classify(tf.bytes, h_bytes).as_u8(),
                    bytes: tf.bytes,
                    arrival_s,
                    start_s,
                    finish_s: t,
                    path_len: f.links.len() as u32,
                    retx: 0,
                    preemptions: f.preemptions,
                    wait_s: start_s - arrival_s,
                    stopped_s: f.stopped_s,
                });
            } else {
                i += 1;
            }
        }

        recompute_rates(&mut active, topo, policy, t);
    }

    let records: Vec<FlowRecord> = records.into_iter().map(|r| r.expect("flow unfinished")).collect();
    let second = records.iter().filter(|r| r.class == 2).count() as u64;
    RunReport {
        scheme: policy.scheme_name().to_string(),
        records,
        meta: RunMeta {
            admitted_second_class: second,
            events_processed: events,
            sim_end_s: t,
            ..RunMeta::default()
        },
    }
}

fn recompute_rates(active: &mut [ActiveFlow], topo: &Topology, policy: FluidPolicy, now: f64) {
    match policy {
        FluidPolicy::MaxMin => max_min_rates(active, topo),
        FluidPolicy::Srpt => srpt_rates(active, topo),
    }
    for f in active.iter_mut() {
        if f.rate_bps > 0.0 && f.started_at.is_none() {
            f.started_at = Some(now);
        }
    }
}

/// Progressive filling: repeatedly find the tightest link, freeze its flows
/// at the equal share, and carry on with the rest.
fn max_min_rates(active: &mut [ActiveFlow], topo: &Topology) {
    let n = active.len();
    let mut frozen = vec![false; n];
    let mut rate = vec![0.0f64; n];
    let mut link_flows: std::collections::BTreeMap<LinkId, Vec<usize>> = Default::default();
    for (i, f) in active.iter().enumerate() {
        for &l in &f.links {
            link_flows.entry(l).or_default().push(i);
        }
    }
    loop {
        let mut tightest: Option<(f64, LinkId)> = None;
        for (&l, flows) in &link_flows {
            let unfrozen = flows.iter().filter(|&&i| !frozen[i]).count();
            if unfrozen == 0 {
                continue;
            }
            let used: f64 = flows
                .iter()
                .filter(|&&i| frozen[i])
                .map(|&i| rate[i])
                .sum();
            let share = (topo.link(l).capacity_bps as f64 - used) / unfrozen as f64;
            if tightest.map(|(s, _)| share < s).unwrap_or(true) {
                tightest = Some((share, l));
            }
        }
        let Some((share, l)) = tightest else { break };
        for &i in &link_flows[&l] {
            if !frozen[i] {
                frozen[i] = true;
                rate[i] = share.max(0.0);
            }
        }
    }
    for (i, f) in active.iter_mut().enumerate() {
        f.rate_bps = rate[i];
    }
}

fn srpt_rates(active: &mut [ActiveFlow], topo: &Topology) {
    // Top flow per link: smallest (remaining, trace_idx).
    let mut top: std::collections::BTreeMap<LinkId, usize> = Default::default();
    for (i, f) in active.iter().enumerate() {
        for &l in &f.links {
            let replace = match top.get(&l) {
                None => true,
                Some(&j) => {
                    let a = (active[i].remaining_bytes, active[i].trace_idx);
                    let b = (active[j].remaining_bytes, active[j].trace_idx);
                    a < b
                }
            };
            if replace {
                top.insert(l, i);
            }
        }
    }
    for i in 0..active.len() {
        let owns_all = active[i].links.iter().all(|l| top.get(l) == Some(&i));
        let new_rate = if owns_all {
            active[i]
                .links
                .iter()
                .map(|&l| topo.link(l).capacity_bps as f64)
                .fold(f64::INFINITY, f64::min)
        } else {
            0.0
        };
        if active[i].started_at.is_some() && active[i].rate_bps > 0.0 && new_rate == 0.0 {
            active[i].preemptions += 1;
        }
        active[i].rate_bps = new_rate;
    }
}
