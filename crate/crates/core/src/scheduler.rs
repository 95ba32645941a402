//! The logically centralized MANager for 2nd-class flows.
//!
//! Permitted flows send at their NIC line rate on a pinned path, so the
//! manager never computes per-flow rates: admission is a pure placement
//! question. For a new flow it scores every path between the endpoints:
//!
//! * waiting costs `P_max`, the largest remaining size among flows already
//!   permitted on the path (the newcomer starts when the biggest one leaves);
//! * preempting costs `N x P_new`: each of the `N` evicted flows is delayed by
//!   the newcomer's own remaining size.
//!
//! Preemption is used only when the cheapest preemptive path beats waiting on
//! the best path (`N x P_new < min over paths of P_max`, strictly). Only flows
//! with strictly larger remaining size may be preempted, which rules out
//! preemption livelock between equals. Among admissible paths the tie-break is
//! maximum remaining bandwidth, then a seeded-RNG coin flip, so identical
//! (state, request, seed) always produce identical messages.
//!
//! Paths of permitted flows are never changed in place (that would reorder
//! packets in flight); only new and already-stopped flows are placed. After a
//! preemption or a departure the manager runs exactly one rescheduling pass
//! over the stopped flows in priority order.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;
use thiserror::Error;

use crate::topology::{LinkId, NodeId, Path, Topology, TopologyError};
use crate::{bytes_in, FlowId, Nanos};

/// RTS payload: everything the manager needs to place a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRequest {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u64,
}

/// Control messages emitted by the manager. Delivery latency is imposed by
/// the caller (the simulator charges half the control round trip each way).
#[derive(Debug, Clone, PartialEq)]
pub enum ManMessage {
    /// Clear to send: the flow may transmit at line rate on `path`.
    Cts { flow: FlowId, path: Path },
    /// Stop to send: halt emission immediately.
    Sts { flow: FlowId },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManError {
    #[error("flow {0} already registered")]
    DuplicateFlow(FlowId),
    #[error("flow {0} not registered")]
    UnknownFlow(FlowId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Outcome of scoring one candidate path against the current occupancy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathEvaluation {
    pub path: Path,
    /// True iff the flow fits after evicting `preempt_list` (all of which have
    /// strictly larger remaining size).
    pub feasible: bool,
    pub n_preempt: usize,
    pub preempt_list: Vec<FlowId>,
    /// P_max: largest remaining size among permitted flows occupying any link
    /// of this path; zero when the path is free.
    pub max_conflict_remaining: u64,
    /// Min over path links of (capacity - occupied line rate), before any
    /// preemption.
    pub remaining_bw: u64,
}

/// Extra total-FCT cost of waiting behind the path's largest conflict.
pub fn path_cost_no_preempt(eval: &PathEvaluation) -> u64 {
    eval.max_conflict_remaining
}

/// Extra total-FCT cost of preempting: every evicted flow is delayed by the
/// new flow's remaining size.
pub fn path_cost_preempt(eval: &PathEvaluation, new_flow_remaining: u64) -> u128 {
    eval.n_preempt as u128 * new_flow_remaining as u128
}

#[derive(Debug, Clone, PartialEq)]
pub struct FindPathResult {
    pub found: bool,
    pub path: Option<Path>,
    pub preempt: Vec<FlowId>,
    pub n_preempt: usize,
    /// N x P_new of the selected path (0 for a free path).
    pub mnp_cost: u128,
    /// Min over all paths of P_max.
    pub min_max_prio: u64,
    /// (path, conflict-set) evaluations charged to this call.
    pub evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlowState {
    /// Not transmitting: brand new or stopped by an STS.
    Waiting,
    Permitted { granted_at: Nanos },
}

#[derive(Debug, Clone)]
struct ManFlow {
    id: FlowId,
    src: NodeId,
    dst: NodeId,
    size: u64,
    rate_bps: u64,
    /// Bytes accounted to completed permission intervals.
    bytes_sent: u64,
    /// Remaining size as of the last refresh; the flow's priority.
    remaining: u64,
    state: FlowState,
    path: Option<Path>,
    /// Epoch of the operation that last stopped this flow. A flow stopped
    /// during the current operation is not retried within it.
    stopped_epoch: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SchedStats {
    pub requests: u64,
    pub removes: u64,
    pub grants: u64,
    pub rejections: u64,
    pub preemptions: u64,
    pub findpath_calls: u64,
    pub path_evals_total: u64,
    pub max_evals_per_call: u64,
}

#[derive(Clone)]
pub struct Manager {
    topo: Arc<Topology>,
    flows: HashMap<FlowId, ManFlow>,
    /// Flow ids ascending by (remaining, id). Rebuilt on refresh.
    order: Vec<FlowId>,
    /// Permitted flow ids per link.
    occupancy: Vec<SmallVec<[FlowId; 2]>>,
    path_cache: HashMap<(NodeId, NodeId), Arc<Vec<Path>>>,
    rng: ChaCha8Rng,
    epoch: u64,
    stats: SchedStats,
}

impl Manager {
    pub fn new(topo: Arc<Topology>, seed: u64) -> Self {
        let n_links = topo.links.len();
        Manager {
            topo,
            flows: HashMap::new(),
            order: Vec::new(),
            occupancy: vec![SmallVec::new(); n_links],
            path_cache: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            epoch: 0,
            stats: SchedStats::default(),
        }
    }

    pub fn stats(&self) -> &SchedStats {
        &self.stats
    }

    /// Number of registered 2nd-class flows (permitted and stopped).
    pub fn active_flows(&self) -> usize {
        self.flows.len()
    }

    /// (flow, remaining) in priority order, for inspection.
    pub fn flow_list(&self) -> Vec<(FlowId, u64)> {
        self.order
            .iter()
            .map(|id| (*id, self.flows[id].remaining))
            .collect()
    }

    pub fn remaining_of(&self, id: FlowId) -> Option<u64> {
        self.flows.get(&id).map(|f| f.remaining)
    }

    pub fn is_permitted(&self, id: FlowId) -> bool {
        matches!(
            self.flows.get(&id).map(|f| f.state),
            Some(FlowState::Permitted { .. })
        )
    }

    pub fn path_of(&self, id: FlowId) -> Option<&Path> {
        self.flows.get(&id).and_then(|f| f.path.as_ref())
    }

    pub fn occupants(&self, link: LinkId) -> &[FlowId] {
        &self.occupancy[link as usize]
    }

    /// Registers a new flow, inserts it into the priority list, and tries to
    /// place it. Returns the control messages to emit, STS-before-CTS.
    pub fn new_request(&mut self, req: FlowRequest, now: Nanos) -> Result<Vec<ManMessage>, ManError> {
        if self.flows.contains_key(&req.id) {
            return Err(ManError::DuplicateFlow(req.id));
        }
        let rate_bps = self.topo.link(self.topo.host_uplink(req.src)?).capacity_bps;
        self.refresh_all(now);
        self.flows.insert(
            req.id,
            ManFlow {
                id: req.id,
                src: req.src,
                dst: req.dst,
                size: req.size_bytes,
                rate_bps,
                bytes_sent: 0,
                remaining: req.size_bytes,
                state: FlowState::Waiting,
                path: None,
                stopped_epoch: 0,
            },
        );
        let key = (req.size_bytes, req.id);
        let pos = self
            .order
            .partition_point(|id| (self.flows[id].remaining, *id) < key);
        self.order.insert(pos, req.id);
        self.epoch += 1;
        self.stats.requests += 1;
        Ok(self.schedule_flow(req.id, now))
    }

    /// FIN handling: frees the flow's links, drops it from the list, and runs
    /// one rescheduling pass over the stopped flows.
    pub fn remove_request(&mut self, id: FlowId, now: Nanos) -> Result<Vec<ManMessage>, ManError> {
        if !self.flows.contains_key(&id) {
            return Err(ManError::UnknownFlow(id));
        }
        self.refresh_all(now);
        let flow = self.flows.remove(&id).unwrap();
        if matches!(flow.state, FlowState::Permitted { .. }) {
            self.release_links(&flow);
        }
        self.order.retain(|f| *f != id);
        self.epoch += 1;
        self.stats.removes += 1;
        Ok(self.reschedule(now))
    }

    /// Re-derives a flow's remaining size from its grant/stop history and
    /// re-sorts the priority list. Returns the remaining bytes.
    pub fn update_remaining(&mut self, id: FlowId, now: Nanos) -> Result<u64, ManError> {
        let flow = self.flows.get_mut(&id).ok_or(ManError::UnknownFlow(id))?;
        flow.remaining = Self::remaining_at(flow, now);
        let rem = flow.remaining;
        self.sort_order();
        Ok(rem)
    }

    fn remaining_at(flow: &ManFlow, now: Nanos) -> u64 {
        let in_progress = match flow.state {
            FlowState::Permitted { granted_at } => {
                bytes_in(now.saturating_sub(granted_at), flow.rate_bps)
            }
            FlowState::Waiting => 0,
        };
        flow.size
            .saturating_sub(flow.bytes_sent)
            .saturating_sub(in_progress)
    }

    fn refresh_all(&mut self, now: Nanos) {
        for flow in self.flows.values_mut() {
            flow.remaining = Self::remaining_at(flow, now);
        }
        self.sort_order();
    }

    fn sort_order(&mut self) {
        let flows = &self.flows;
        self.order.sort_by_key(|id| (flows[id].remaining, *id));
    }

    fn release_links(&mut self, flow: &ManFlow) {
        if let Some(path) = &flow.path {
            for &lid in &path.links {
                self.occupancy[lid as usize].retain(|f| *f != flow.id);
            }
        }
    }

    fn stop_flow(&mut self, id: FlowId, now: Nanos) {
        let epoch = self.epoch;
        let flow = self.flows.get_mut(&id).expect("stopping unknown flow");
        if let FlowState::Permitted { granted_at } = flow.state {
            flow.bytes_sent += bytes_in(now.saturating_sub(granted_at), flow.rate_bps);
            flow.bytes_sent = flow.bytes_sent.min(flow.size);
            flow.remaining = flow.size - flow.bytes_sent;
        }
        flow.state = FlowState::Waiting;
        flow.stopped_epoch = epoch;
        let flow = self.flows.get(&id).cloned().expect("flow vanished");
        self.release_links(&flow);
        self.flows.get_mut(&id).unwrap().path = None;
    }

    fn grant(&mut self, id: FlowId, path: &Path, now: Nanos) {
        for &lid in &path.links {
            self.occupancy[lid as usize].push(id);
        }
        let flow = self.flows.get_mut(&id).unwrap();
        flow.state = FlowState::Permitted { granted_at: now };
        flow.path = Some(path.clone());
    }

    fn schedule_flow(&mut self, id: FlowId, now: Nanos) -> Vec<ManMessage> {
        let (src, dst, remaining, rate) = {
            let f = &self.flows[&id];
            (f.src, f.dst, f.remaining, f.rate_bps)
        };
        let result = self.find_path(src, dst, remaining, rate);
        let mut msgs = Vec::new();
        if result.found {
            let path = result.path.expect("found without path");
            for &pid in &result.preempt {
                debug_assert!(
                    self.flows[&pid].remaining > remaining,
                    "preemption must target a strictly larger remaining size"
                );
                self.stop_flow(pid, now);
                self.stats.preemptions += 1;
                msgs.push(ManMessage::Sts { flow: pid });
            }
            self.grant(id, &path, now);
            self.stats.grants += 1;
            msgs.push(ManMessage::Cts { flow: id, path });
            // Freed capacity elsewhere may admit stopped flows; flows stopped
            // just above are not candidates (their stop epoch is current).
            if !result.preempt.is_empty() {
                msgs.extend(self.reschedule(now));
            }
        } else {
            let flow = self.flows.get_mut(&id).unwrap();
            flow.stopped_epoch = self.epoch;
            self.stats.rejections += 1;
            msgs.push(ManMessage::Sts { flow: id });
        }
        msgs
    }

    /// One pass over the stopped flows in ascending remaining order, snapshot
    /// taken at pass start. Admissions inside the pass may themselves preempt;
    /// flows stopped during the pass are not retried within it.
    fn reschedule(&mut self, now: Nanos) -> Vec<ManMessage> {
        let epoch = self.epoch;
        let candidates: Vec<FlowId> = self
            .order
            .iter()
            .copied()
            .filter(|id| {
                let f = &self.flows[id];
                matches!(f.state, FlowState::Waiting) && f.stopped_epoch < epoch
            })
            .collect();
        let mut msgs = Vec::new();
        for id in candidates {
            let (src, dst, remaining, rate) = {
                let f = &self.flows[&id];
                if !matches!(f.state, FlowState::Waiting) {
                    continue;
                }
                (f.src, f.dst, f.remaining, f.rate_bps)
            };
            let result = self.find_path(src, dst, remaining, rate);
            if result.found {
                let path = result.path.expect("found without path");
                for &pid in &result.preempt {
                    debug_assert!(
                        self.flows[&pid].remaining > remaining,
                        "preemption must target a strictly larger remaining size"
                    );
                    self.stop_flow(pid, now);
                    self.stats.preemptions += 1;
                    msgs.push(ManMessage::Sts { flow: pid });
                }
                self.grant(id, &path, now);
                self.stats.grants += 1;
                msgs.push(ManMessage::Cts { flow: id, path });
            }
            // No STS on a failed retry: the flow already holds one.
        }
        msgs
    }

    fn paths_between(&mut self, src: NodeId, dst: NodeId) -> Arc<Vec<Path>> {
        if let Some(p) = self.path_cache.get(&(src, dst)) {
            return Arc::clone(p);
        }
        let paths = Arc::new(self.topo.enumerate_paths(src, dst).unwrap_or_default());
        self.path_cache.insert((src, dst), Arc::clone(&paths));
        paths
    }

    /// Scores every path for a prospective flow without touching scheduler
    /// state. Ordering matches `enumerate_paths`.
    pub fn evaluate_paths(
        &self,
        src: NodeId,
        dst: NodeId,
        remaining: u64,
        rate_bps: u64,
    ) -> Vec<PathEvaluation> {
        let paths = match self.path_cache.get(&(src, dst)) {
            Some(p) => Arc::clone(p),
            None => Arc::new(self.topo.enumerate_paths(src, dst).unwrap_or_default()),
        };
        paths
            .iter()
            .map(|p| self.evaluate_path(p, remaining, rate_bps).0)
            .collect()
    }

    /// Selects the best path for a flow with `remaining` bytes left: minimal
    /// N x P_new among feasible paths, ties broken by maximum remaining
    /// bandwidth and then uniformly at random. `found` is true iff the winner
    /// is preemption-free or its cost strictly beats waiting anywhere.
    pub fn find_path(
        &mut self,
        src: NodeId,
        dst: NodeId,
        remaining: u64,
        rate_bps: u64,
    ) -> FindPathResult {
        let paths = self.paths_between(src, dst);
        self.stats.findpath_calls += 1;
        let mut evals = Vec::with_capacity(paths.len());
        let mut call_evals = 0u64;
        for p in paths.iter() {
            let (ev, n) = self.evaluate_path(p, remaining, rate_bps);
            call_evals += n;
            evals.push(ev);
        }
        self.stats.path_evals_total += call_evals;
        self.stats.max_evals_per_call = self.stats.max_evals_per_call.max(call_evals);

        let min_max_prio = evals
            .iter()
            .map(|e| e.max_conflict_remaining)
            .min()
            .unwrap_or(0);

        let feasible: Vec<&PathEvaluation> = evals.iter().filter(|e| e.feasible).collect();
        if feasible.is_empty() {
            return FindPathResult {
                found: false,
                path: None,
                preempt: Vec::new(),
                n_preempt: 0,
                mnp_cost: 0,
                min_max_prio,
                evals: call_evals,
            };
        }
        let best_cost = feasible
            .iter()
            .map(|e| path_cost_preempt(e, remaining))
            .min()
            .unwrap();
        let cheapest: Vec<&&PathEvaluation> = feasible
            .iter()
            .filter(|e| path_cost_preempt(e, remaining) == best_cost)
            .collect();
        let best_bw = cheapest.iter().map(|e| e.remaining_bw).max().unwrap();
        let tied: Vec<&&&PathEvaluation> = cheapest
            .iter()
            .filter(|e| e.remaining_bw == best_bw)
            .collect();
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            tied[self.rng.gen_range(0..tied.len())]
        };

        let found = pick.n_preempt == 0 || best_cost < min_max_prio as u128;
        FindPathResult {
            found,
            path: found.then(|| pick.path.clone()),
            preempt: if found { pick.preempt_list.clone() } else { Vec::new() },
            n_preempt: pick.n_preempt,
            mnp_cost: best_cost,
            min_max_prio,
            evals: call_evals,
        }
    }

    /// Scores one path. Returns the evaluation and the number of candidate
    /// preemption sets examined (at least 1).
    fn evaluate_path(&self, path: &Path, remaining: u64, rate_bps: u64) -> (PathEvaluation, u64) {
        // Distinct permitted flows touching the path, and who sits where.
        let mut occupants: Vec<(FlowId, u64, u64)> = Vec::new(); // (id, remaining, rate)
        let mut per_link: Vec<SmallVec<[usize; 4]>> = Vec::with_capacity(path.links.len());
        for &lid in &path.links {
            let mut on_link = SmallVec::new();
            for &fid in &self.occupancy[lid as usize] {
                let idx = match occupants.iter().position(|(id, _, _)| *id == fid) {
                    Some(i) => i,
                    None => {
                        let f = &self.flows[&fid];
                        occupants.push((fid, f.remaining, f.rate_bps));
                        occupants.len() - 1
                    }
                };
                on_link.push(idx);
            }
            per_link.push(on_link);
        }

        let max_conflict_remaining = occupants.iter().map(|(_, r, _)| *r).max().unwrap_or(0);
        let remaining_bw = path
            .links
            .iter()
            .zip(&per_link)
            .map(|(&lid, on)| {
                let cap = self.topo.link(lid).capacity_bps;
                let used: u64 = on.iter().map(|&i| occupants[i].2).sum();
                cap.saturating_sub(used)
            })
            .min()
            .unwrap_or(0);

        // Per link: keep flows with remaining <= ours (not preemptible), and
        // find the minimal sufficient eviction subsets among the rest.
        let mut link_choices: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut feasible = true;
        for (&lid, on) in path.links.iter().zip(&per_link) {
            let cap = self.topo.link(lid).capacity_bps;
            let fixed: u64 = on
                .iter()
                .map(|&i| &occupants[i])
                .filter(|(_, r, _)| *r <= remaining)
                .map(|(_, _, rate)| *rate)
                .sum();
            let evictable: Vec<usize> = on
                .iter()
                .copied()
                .filter(|&i| occupants[i].1 > remaining)
                .collect();
            // Even after evicting every evictable flow the fixed load stays;
            // the path is blocked if we still do not fit.
            if rate_bps + fixed > cap {
                feasible = false;
                break;
            }
            let occupied_all: u64 = on.iter().map(|&i| occupants[i].2).sum();
            let deficit = (rate_bps + occupied_all).saturating_sub(cap);
            if deficit == 0 {
                continue;
            }
            link_choices.push(minimal_sufficient_subsets(&occupants, &evictable, deficit));
        }

        if !feasible {
            return (
                PathEvaluation {
                    path: path.clone(),
                    feasible: false,
                    n_preempt: 0,
                    preempt_list: Vec::new(),
                    max_conflict_remaining,
                    remaining_bw,
                },
                1,
            );
        }

        // Cartesian product of per-link choices; evicting a flow helps every
        // link it sits on, so the union of per-link sufficient subsets is
        // sufficient everywhere and the minimum union is optimal.
        let mut candidates: Vec<Vec<FlowId>> = vec![Vec::new()];
        for choices in &link_choices {
            let mut next = Vec::new();
            for base in &candidates {
                for choice in choices {
                    let mut merged = base.clone();
                    for &i in choice {
                        let id = occupants[i].0;
                        if !merged.contains(&id) {
                            merged.push(id);
                        }
                    }
                    merged.sort_unstable();
                    if !next.contains(&merged) {
                        next.push(merged);
                    }
                }
            }
            candidates = next;
        }
        let evals = candidates.len().max(1) as u64;
        let best = candidates
            .into_iter()
            .min_by(|a, b| (a.len(), a.as_slice()).cmp(&(b.len(), b.as_slice())))
            .unwrap_or_default();

        (
            PathEvaluation {
                path: path.clone(),
                feasible: true,
                n_preempt: best.len(),
                preempt_list: best,
                max_conflict_remaining,
                remaining_bw,
            },
            evals,
        )
    }

    /// Structural self-check: ordering, occupancy consistency, and per-link
    /// capacity. Used by tests and the simulator's validation mode.
    pub fn check_invariants(&self) -> Result<(), String> {
        for w in self.order.windows(2) {
            let a = &self.flows[&w[0]];
            let b = &self.flows[&w[1]];
            if (a.remaining, a.id) > (b.remaining, b.id) {
                return Err(format!("flow list out of order at {} vs {}", a.id, b.id));
            }
        }
        if self.order.len() != self.flows.len() {
            return Err("flow list and registry disagree".into());
        }
        let mut expect: HashMap<LinkId, Vec<FlowId>> = HashMap::new();
        for f in self.flows.values() {
            match (&f.state, &f.path) {
                (FlowState::Permitted { .. }, Some(p)) => {
                    for &l in &p.links {
                        expect.entry(l).or_default().push(f.id);
                    }
                }
                (FlowState::Permitted { .. }, None) => {
                    return Err(format!("permitted flow {} has no path", f.id))
                }
                (FlowState::Waiting, Some(_)) => {
                    return Err(format!("waiting flow {} still holds a path", f.id))
                }
                _ => {}
            }
        }
        for (lid, occ) in self.occupancy.iter().enumerate() {
            let mut got: Vec<FlowId> = occ.to_vec();
            got.sort_unstable();
            let mut want = expect.remove(&(lid as LinkId)).unwrap_or_default();
            want.sort_unstable();
            if got != want {
                return Err(format!("occupancy mismatch on link {lid}: {got:?} vs {want:?}"));
            }
            let used: u64 = occ.iter().map(|f| self.flows[f].rate_bps).sum();
            if used > self.topo.link(lid as LinkId).capacity_bps {
                return Err(format!("link {lid} oversubscribed: {used} bps"));
            }
        }
        Ok(())
    }
}

/// All minimal subsets of `evictable` whose rates sum to at least `deficit`.
/// Minimal means no proper subset is itself sufficient.
fn minimal_sufficient_subsets(
    occupants: &[(FlowId, u64, u64)],
    evictable: &[usize],
    deficit: u64,
) -> Vec<Vec<usize>> {
    let m = evictable.len();
    let mut sufficient: Vec<(u32, Vec<usize>)> = Vec::new();
    for mask in 1u32..(1 << m) {
        let sum: u64 = (0..m)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| occupants[evictable[b]].2)
            .sum();
        if sum >= deficit {
            sufficient.push((
                mask,
                (0..m)
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| evictable[b])
                    .collect(),
            ));
        }
    }
    let masks: Vec<u32> = sufficient.iter().map(|(m, _)| *m).collect();
    sufficient
        .into_iter()
        .filter(|(mask, _)| {
            !masks
                .iter()
                .any(|other| *other != *mask && other & mask == *other)
        })
        .map(|(_, s)| s)
        .collect()
}
