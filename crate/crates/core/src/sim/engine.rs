//! The packet-level engine: hosts with a simplified reliable transport,
//! switches with dual strict-priority queues over a shared per-port buffer,
//! hop-by-hop PFC for the low-priority class, and the out-of-band control
//! plane to the MAN.
//!
//! All timing is integer nanoseconds. Ports are the sending side of each
//! directed link; a packet costs one serialization per hop plus the link
//! propagation delay. ACKs are 40-byte frames on an idealized reverse path:
//! never queued, never dropped, delivered after the reverse propagation and
//! per-hop serialization sum.
//!
//! Transport: a windowed, ACK-clocked sender with fast retransmit on three
//! duplicate ACKs and a per-class minimum RTO. 1st-class senders grow their
//! window (slow start, then additive increase) and halve on loss, which is
//! what actually loads the high-priority queues at scale. 2nd-class senders
//! keep the initial window, sized to the bandwidth-delay product: line rate
//! without ever outrunning the one-flow-per-link guarantee. After an STS a
//! 2nd-class sender waits for its in-flight packets to drain before emitting
//! on a newly granted path, so sequence numbers arrive in order downstream
//! even across a path change.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::report::{FlowRecord, RunMeta, RunReport};
use crate::scheduler::{FlowRequest, ManMessage, Manager};
use crate::topology::{LinkId, NodeId, Path, Topology};
use crate::workload::FlowTrace;
use crate::{classify, flow_ports, serialization_ns, FlowClass, Nanos};

use super::event::EventQueue;
use super::{SimError, SimParams};

pub const PKT_BYTES: u32 = 1500;
const ACK_BYTES: u64 = 40;

#[derive(Debug, Clone, Copy)]
struct Packet {
    flow: u32,
    seq: u32,
    bytes: u32,
    class: FlowClass,
    /// Index into the flow's route list.
    route: u8,
    /// Index of the link this packet is currently queued on / crossing.
    hop: u8,
    retx: bool,
}

#[derive(Debug)]
enum HostMsg {
    Cts(Path),
    Sts,
}

#[derive(Debug)]
enum Ev {
    FlowArrive { flow: u32 },
    SerDone { port: LinkId },
    PktArrive { pkt: Packet },
    /// RTS (fin = false) or FIN (fin = true) reaching the MAN.
    ManDeliver { flow: u32, fin: bool },
    HostDeliver { flow: u32, msg: HostMsg },
    Ack { flow: u32, cum: u32 },
    Rto { flow: u32 },
    Pfc { port: LinkId, pause: bool },
}

struct Port {
    q1: VecDeque<Packet>,
    q2: VecDeque<Packet>,
    in_service: Option<Packet>,
    busy: bool,
    /// Downstream asked us to hold class-2 traffic.
    paused_c2: bool,
    /// This port's occupancy is inside the pause band (hysteresis state).
    asserting: bool,
    src_node: NodeId,
    capacity_bps: u64,
    delay_ns: Nanos,
    /// Host NICs never drop their own traffic; switch ports share a fixed
    /// buffer across both queues.
    unbounded: bool,
    bytes_fwd: u64,
    busy_ns: Nanos,
}

impl Port {
    fn occupancy(&self) -> usize {
        self.q1.len() + self.q2.len()
    }
}

struct FlowRt {
    src: NodeId,
    dst: NodeId,
    bytes: u64,
    class: FlowClass,
    n_pkts: u32,
    arrival_ns: Nanos,
    routes: Vec<Arc<Vec<LinkId>>>,
    ack_delays: Vec<Nanos>,
    // sender
    next_seq: u32,
    snd_una: u32,
    cwnd: f64,
    ssthresh: f64,
    dup_acks: u32,
    recovery_point: Option<u32>,
    rto_deadline: Nanos,
    rto_pending: bool,
    rto_backoff: u32,
    permitted: bool,
    await_drain: bool,
    fin_sent: bool,
    // receiver
    rcv_bits: Vec<u64>,
    rcv_cum: u32,
    unique_bytes: u64,
    last_orig_arrival_seq: Option<u32>,
    // bookkeeping
    start_ns: Option<Nanos>,
    finish_ns: Option<Nanos>,
    first_cts_ns: Option<Nanos>,
    stop_open_ns: Option<Nanos>,
    stopped_ns: Nanos,
    preemptions: u32,
    retx_count: u32,
}

impl FlowRt {
    fn in_flight(&self) -> u32 {
        self.next_seq - self.snd_una
    }

    fn gate_open(&self) -> bool {
        self.permitted && !self.await_drain
    }

    fn pkt_len(&self, seq: u32) -> u32 {
        if seq + 1 == self.n_pkts {
            (self.bytes - (self.n_pkts as u64 - 1) * PKT_BYTES as u64) as u32
        } else {
            PKT_BYTES
        }
    }

    fn seq_received(&self, seq: u32) -> bool {
        self.rcv_bits[(seq / 64) as usize] & (1u64 << (seq % 64)) != 0
    }

    fn mark_received(&mut self, seq: u32) {
        self.rcv_bits[(seq / 64) as usize] |= 1u64 << (seq % 64);
    }
}

pub struct Engine {
    topo: Arc<Topology>,
    params: SimParams,
    t_cost_half: Nanos,
    now: Nanos,
    queue: EventQueue<Ev>,
    ports: Vec<Port>,
    /// Number of ports per node currently asserting pause.
    node_assert: Vec<u32>,
    /// Links terminating at each node (whose senders we pause).
    inbound: Vec<Vec<LinkId>>,
    flows: Vec<FlowRt>,
    man: Manager,
    path_cache: HashMap<(NodeId, NodeId), Arc<Vec<Path>>>,
    unfinished: usize,
    drops: [u64; 2],
    pfc_pauses: u64,
    events: u64,
    /// Class-2 payload packets currently crossing each link, keyed by
    /// (flow, route version): stale-route drain traffic must not be
    /// mistaken for a live occupant.
    wire_c2: Vec<SmallVec<[(u32, u8, u32); 2]>>,
    violations: Vec<String>,
}

impl Engine {
    pub fn new(
        topo: Arc<Topology>,
        trace: &FlowTrace,
        params: SimParams,
    ) -> Result<Self, SimError> {
        let n_nodes = topo.nodes.len();
        let mut inbound = vec![Vec::new(); n_nodes];
        let mut ports = Vec::with_capacity(topo.links.len());
        for link in &topo.links {
            inbound[link.dst_node as usize].push(link.id);
            ports.push(Port {
                q1: VecDeque::new(),
                q2: VecDeque::new(),
                in_service: None,
                busy: false,
                paused_c2: false,
                asserting: false,
                src_node: link.src_node,
                capacity_bps: link.capacity_bps,
                delay_ns: link.delay_ns,
                unbounded: topo.is_host(link.src_node),
                bytes_fwd: 0,
                busy_ns: 0,
            });
        }

        let mut queue = EventQueue::new();
        let mut flows = Vec::with_capacity(trace.len());
        for (i, tf) in trace.flows.iter().enumerate() {
            if !topo.is_host(tf.src) || !topo.is_host(tf.dst) || tf.src == tf.dst {
                return Err(SimError::BadTrace(format!(
                    "flow {i}: endpoints {} -> {} invalid",
                    tf.src, tf.dst
                )));
            }
            let bytes = tf.bytes.max(1);
            let n_pkts = bytes.div_ceil(PKT_BYTES as u64) as u32;
            flows.push(FlowRt {
                src: tf.src,
                dst: tf.dst,
                bytes,
                class: classify(tf.bytes, params.h_bytes),
                n_pkts,
                arrival_ns: tf.arrival_ns,
                routes: Vec::new(),
                ack_delays: Vec::new(),
                next_seq: 0,
                snd_una: 0,
                cwnd: params.init_window as f64,
                ssthresh: f64::INFINITY,
                dup_acks: 0,
                recovery_point: None,
                rto_deadline: 0,
                rto_pending: false,
                rto_backoff: 1,
                permitted: false,
                await_drain: false,
                fin_sent: false,
                rcv_bits: vec![0; (n_pkts as usize).div_ceil(64)],
                rcv_cum: 0,
                unique_bytes: 0,
                last_orig_arrival_seq: None,
                start_ns: None,
                finish_ns: None,
                first_cts_ns: None,
                stop_open_ns: None,
                stopped_ns: 0,
                preemptions: 0,
                retx_count: 0,
            });
            queue.schedule(tf.arrival_ns, Ev::FlowArrive { flow: i as u32 });
        }

        let unfinished = flows.len();
        let wire_c2 = vec![SmallVec::new(); topo.links.len()];
        let man = Manager::new(Arc::clone(&topo), params.man_seed);
        Ok(Engine {
            t_cost_half: params.t_cost_ns / 2,
            params,
            now: 0,
            queue,
            ports,
            node_assert: vec![0; n_nodes],
            inbound,
            flows,
            man,
            path_cache: HashMap::new(),
            unfinished,
            drops: [0, 0],
            pfc_pauses: 0,
            events: 0,
            wire_c2,
            violations: Vec::new(),
            topo,
        })
    }

    pub fn run(mut self) -> Result<RunReport, SimError> {
        while let Some((t, ev)) = self.queue.pop() {
            debug_assert!(t >= self.now, "time went backwards");
            self.now = t;
            self.events += 1;
            match ev {
                Ev::FlowArrive { flow } => self.on_flow_arrive(flow),
                Ev::SerDone { port } => self.on_ser_done(port),
                Ev::PktArrive { pkt } => self.on_pkt_arrive(pkt),
                Ev::ManDeliver { flow, fin } => self.on_man_deliver(flow, fin),
                Ev::HostDeliver { flow, msg } => self.on_host_deliver(flow, msg),
                Ev::Ack { flow, cum } => self.on_ack(flow, cum),
                Ev::Rto { flow } => self.on_rto(flow),
                Ev::Pfc { port, pause } => self.on_pfc(port, pause),
            }
        }
        if self.unfinished > 0 {
            let stuck: Vec<String> = self
                .flows
                .iter()
                .enumerate()
                .filter(|(_, f)| f.finish_ns.is_none())
                .take(8)
                .map(|(i, f)| {
                    format!(
                        "flow {i}: class {:?} sent {}/{} acked {} permitted {} drain {}",
                        f.class, f.next_seq, f.n_pkts, f.snd_una, f.permitted, f.await_drain
                    )
                })
                .collect();
            return Err(SimError::Deadlock {
                unfinished: self.unfinished,
                detail: stuck.join("; "),
            });
        }
        if self.params.validate {
            self.final_checks();
        }
        if !self.violations.is_empty() {
            return Err(SimError::Invariant(self.violations));
        }
        Ok(self.into_report())
    }

    fn final_checks(&mut self) {
        for (i, port) in self.ports.iter().enumerate() {
            let max_bits = port.capacity_bps as u128 * port.busy_ns as u128;
            if port.bytes_fwd as u128 * 8_000_000_000 > max_bits {
                self.violations.push(format!(
                    "link {i} forwarded {} bytes in {} busy ns at {} bps",
                    port.bytes_fwd, port.busy_ns, port.capacity_bps
                ));
            }
        }
        if let Err(e) = self.man.check_invariants() {
            self.violations.push(format!("manager: {e}"));
        }
    }

    fn into_report(self) -> RunReport {
        let mut records = Vec::with_capacity(self.flows.len());
        for (i, f) in self.flows.iter().enumerate() {
            records.push(FlowRecord {
                flow_id: i as u64,
                class: f.class.as_u8(),
                bytes: f.bytes,
                arrival_s: f.arrival_ns as f64 / 1e9,
                start_s: f.start_ns.expect("finished flow started") as f64 / 1e9,
                finish_s: f.finish_ns.expect("finished") as f64 / 1e9,
                path_len: f.routes.last().map(|r| r.len()).unwrap_or(0) as u32,
                retx: f.retx_count,
                preemptions: f.preemptions,
                wait_s: f
                    .first_cts_ns
                    .map(|t| (t - f.arrival_ns) as f64 / 1e9)
                    .unwrap_or(0.0),
                stopped_s: f.stopped_ns as f64 / 1e9,
            });
        }
        let stats = self.man.stats();
        let admitted = self
            .flows
            .iter()
            .filter(|f| f.first_cts_ns.is_some())
            .count() as u64;
        RunReport {
            scheme: "hyline".into(),
            records,
            meta: RunMeta {
                drops_class1: self.drops[0],
                drops_class2: self.drops[1],
                man_requests: stats.requests,
                man_grants: stats.grants,
                man_preemptions: stats.preemptions,
                man_rejections: stats.rejections,
                findpath_calls: stats.findpath_calls,
                path_evals_total: stats.path_evals_total,
                max_evals_per_findpath: stats.max_evals_per_call,
                admitted_second_class: admitted,
                pfc_pause_events: self.pfc_pauses,
                events_processed: self.events,
                sim_end_s: self.now as f64 / 1e9,
            },
        }
    }

    fn paths_between(&mut self, src: NodeId, dst: NodeId) -> Arc<Vec<Path>> {
        if let Some(p) = self.path_cache.get(&(src, dst)) {
            return Arc::clone(p);
        }
        let paths = Arc::new(
            self.topo
                .enumerate_paths(src, dst)
                .expect("trace endpoints validated"),
        );
        self.path_cache.insert((src, dst), Arc::clone(&paths));
        paths
    }

    fn ack_delay(&self, route: &[LinkId]) -> Nanos {
        route
            .iter()
            .map(|&l| {
                let link = self.topo.link(l);
                link.delay_ns + serialization_ns(ACK_BYTES, link.capacity_bps)
            })
            .sum()
    }

    /// Packets needed in flight to keep the path's NIC busy: the full ack
    /// loop (per-hop store-and-forward, both propagation directions, the ack
    /// frames) divided by one serialization.
    fn pipe_pkts(&self, route: &[LinkId], ack_delay: Nanos) -> u32 {
        let rate = self.topo.link(route[0]).capacity_bps;
        let ser = serialization_ns(PKT_BYTES as u64, rate);
        let prop: Nanos = route.iter().map(|&l| self.topo.link(l).delay_ns).sum();
        let loop_ns = route.len() as u64 * ser + prop + ack_delay;
        loop_ns.div_ceil(ser) as u32
    }

    fn adopt_route(&mut self, flow: u32, path: &Path) {
        let delay = self.ack_delay(&path.links);
        // The configured initial window approximates the bandwidth-delay
        // product; floor it at the granted path's real pipe depth so a
        // permitted flow actually sends at line rate.
        let window = self.params.init_window.max(self.pipe_pkts(&path.links, delay));
        let f = &mut self.flows[flow as usize];
        f.routes.push(Arc::new(path.links.clone()));
        f.ack_delays.push(delay);
        match f.class {
            FlowClass::Second => f.cwnd = window as f64,
            FlowClass::First => {
                if f.routes.len() == 1 {
                    f.cwnd = window as f64;
                }
            }
        }
    }

    fn on_flow_arrive(&mut self, flow: u32) {
        let (src, dst, class) = {
            let f = &self.flows[flow as usize];
            (f.src, f.dst, f.class)
        };
        match class {
            FlowClass::First => {
                let paths = self.paths_between(src, dst);
                let (sp, dp) = flow_ports(flow as u64);
                let path = self.topo.ecmp_select((src, dst, sp, dp), &paths).clone();
                self.adopt_route(flow, &path);
                self.flows[flow as usize].permitted = true;
                self.try_emit(flow);
            }
            FlowClass::Second => {
                self.queue
                    .schedule(self.now + self.t_cost_half, Ev::ManDeliver { flow, fin: false });
            }
        }
    }

    fn on_man_deliver(&mut self, flow: u32, fin: bool) {
        let msgs = if fin {
            self.man
                .remove_request(flow as u64, self.now)
                .expect("FIN for registered flow")
        } else {
            let req = {
                let f = &self.flows[flow as usize];
                FlowRequest {
                    id: flow as u64,
                    src: f.src,
                    dst: f.dst,
                    size_bytes: f.bytes,
                }
            };
            self.man.new_request(req, self.now).expect("unique flow ids")
        };
        if self.params.validate {
            if let Err(e) = self.man.check_invariants() {
                self.violations
                    .push(format!("manager at {} ns: {e}", self.now));
            }
        }
        for msg in msgs {
            let (flow, msg) = match msg {
                ManMessage::Cts { flow, path } => (flow as u32, HostMsg::Cts(path)),
                ManMessage::Sts { flow } => (flow as u32, HostMsg::Sts),
            };
            self.queue
                .schedule(self.now + self.t_cost_half, Ev::HostDeliver { flow, msg });
        }
    }

    fn on_host_deliver(&mut self, flow: u32, msg: HostMsg) {
        match msg {
            HostMsg::Cts(path) => {
                self.adopt_route(flow, &path);
                let f = &mut self.flows[flow as usize];
                f.permitted = true;
                if f.first_cts_ns.is_none() {
                    f.first_cts_ns = Some(self.now);
                }
                if let Some(open) = f.stop_open_ns.take() {
                    f.stopped_ns += self.now - open;
                }
                self.try_emit(flow);
            }
            HostMsg::Sts => {
                let now = self.now;
                let f = &mut self.flows[flow as usize];
                f.permitted = false;
                // An STS that crosses the FIN in flight is a no-op: there is
                // nothing left to hold back.
                if f.next_seq < f.n_pkts {
                    if f.first_cts_ns.is_some() {
                        f.preemptions += 1;
                        if f.stop_open_ns.is_none() {
                            f.stop_open_ns = Some(now);
                        }
                    }
                    f.await_drain = f.in_flight() > 0;
                }
            }
        }
    }

    fn try_emit(&mut self, flow: u32) {
        loop {
            let pkt = {
                let f = &mut self.flows[flow as usize];
                if !f.gate_open()
                    || f.next_seq >= f.n_pkts
                    || f.in_flight() >= (f.cwnd as u32).max(1)
                {
                    break;
                }
                let seq = f.next_seq;
                f.next_seq += 1;
                if f.start_ns.is_none() {
                    f.start_ns = Some(self.now);
                }
                Packet {
                    flow,
                    seq,
                    bytes: f.pkt_len(seq),
                    class: f.class,
                    route: (f.routes.len() - 1) as u8,
                    hop: 0,
                    retx: false,
                }
            };
            self.arm_rto(flow);
            let first_link = self.flows[flow as usize].routes.last().unwrap()[0];
            self.enqueue(first_link, pkt);
            let need_fin = {
                let f = &self.flows[flow as usize];
                pkt.seq + 1 == f.n_pkts && f.class == FlowClass::Second && !f.fin_sent
            };
            if need_fin {
                self.flows[flow as usize].fin_sent = true;
                self.queue
                    .schedule(self.now + self.t_cost_half, Ev::ManDeliver { flow, fin: true });
            }
        }
    }

    fn retransmit(&mut self, flow: u32) {
        let pkt = {
            let f = &mut self.flows[flow as usize];
            if f.snd_una >= f.n_pkts {
                return;
            }
            f.retx_count += 1;
            let seq = f.snd_una;
            Packet {
                flow,
                seq,
                bytes: f.pkt_len(seq),
                class: f.class,
                route: (f.routes.len() - 1) as u8,
                hop: 0,
                retx: true,
            }
        };
        let first_link = self.flows[flow as usize].routes.last().unwrap()[0];
        self.enqueue(first_link, pkt);
    }

    // ---- ports ----------------------------------------------------------

    fn enqueue(&mut self, link: LinkId, pkt: Packet) {
        let buffer = self.params.buffer_pkts;
        let port = &mut self.ports[link as usize];
        if !port.unbounded && port.occupancy() >= buffer {
            self.drops[(pkt.class.as_u8() - 1) as usize] += 1;
            return;
        }
        match pkt.class {
            FlowClass::First => port.q1.push_back(pkt),
            FlowClass::Second => port.q2.push_back(pkt),
        }
        self.pfc_check_raise(link);
        self.try_serve(link);
    }

    fn try_serve(&mut self, link: LinkId) {
        let (pkt, ser) = {
            let port = &mut self.ports[link as usize];
            if port.busy {
                return;
            }
            let pkt = if let Some(p) = port.q1.pop_front() {
                p
            } else if !port.paused_c2 {
                match port.q2.pop_front() {
                    Some(p) => p,
                    None => return,
                }
            } else {
                return;
            };
            port.busy = true;
            port.in_service = Some(pkt);
            let ser = serialization_ns(pkt.bytes as u64, port.capacity_bps);
            port.busy_ns += ser;
            port.bytes_fwd += pkt.bytes as u64;
            (pkt, ser)
        };
        if pkt.class == FlowClass::Second {
            self.wire_track(link, pkt.flow, pkt.route, 1);
            if self.params.validate {
                self.check_exclusive(link, pkt.flow, pkt.route);
            }
        }
        self.queue.schedule(self.now + ser, Ev::SerDone { port: link });
        self.pfc_check_release(link);
    }

    fn on_ser_done(&mut self, link: LinkId) {
        let (pkt, delay) = {
            let port = &mut self.ports[link as usize];
            let pkt = port.in_service.take().expect("serialization without packet");
            port.busy = false;
            (pkt, port.delay_ns)
        };
        self.queue.schedule(self.now + delay, Ev::PktArrive { pkt });
        self.try_serve(link);
    }

    fn on_pkt_arrive(&mut self, mut pkt: Packet) {
        let link = self.flows[pkt.flow as usize].routes[pkt.route as usize][pkt.hop as usize];
        if pkt.class == FlowClass::Second {
            self.wire_track(link, pkt.flow, pkt.route, -1);
        }
        let at_node = self.topo.link(link).dst_node;
        if at_node == self.flows[pkt.flow as usize].dst {
            self.receive_payload(pkt);
        } else {
            pkt.hop += 1;
            let next = self.flows[pkt.flow as usize].routes[pkt.route as usize][pkt.hop as usize];
            self.enqueue(next, pkt);
        }
    }

    fn receive_payload(&mut self, pkt: Packet) {
        let flow = pkt.flow;
        let now = self.now;
        let f = &mut self.flows[flow as usize];
        if self.params.validate && pkt.class == FlowClass::Second && !pkt.retx {
            if let Some(last) = f.last_orig_arrival_seq {
                if pkt.seq <= last {
                    self.violations.push(format!(
                        "class-2 reordering on flow {flow}: seq {} after {}",
                        pkt.seq, last
                    ));
                }
            }
            f.last_orig_arrival_seq = Some(pkt.seq);
        }
        if !f.seq_received(pkt.seq) {
            f.mark_received(pkt.seq);
            f.unique_bytes += pkt.bytes as u64;
            while f.rcv_cum < f.n_pkts && f.seq_received(f.rcv_cum) {
                f.rcv_cum += 1;
            }
            if f.unique_bytes >= f.bytes {
                debug_assert_eq!(f.unique_bytes, f.bytes, "delivered bytes exceed flow size");
                if f.finish_ns.is_none() {
                    f.finish_ns = Some(now);
                    self.unfinished -= 1;
                }
            }
        }
        let cum = f.rcv_cum;
        let delay = f.ack_delays[pkt.route as usize];
        self.queue.schedule(now + delay, Ev::Ack { flow, cum });
    }

    // ---- transport ------------------------------------------------------

    fn on_ack(&mut self, flow: u32, cum: u32) {
        let mut do_retx = false;
        {
            let rto = self.rto_of(flow);
            let f = &mut self.flows[flow as usize];
            if cum > f.snd_una {
                let delta = (cum - f.snd_una) as f64;
                f.snd_una = cum;
                f.dup_acks = 0;
                f.rto_backoff = 1;
                f.rto_deadline = self.now + rto;
                if f.class == FlowClass::First {
                    if f.cwnd < f.ssthresh {
                        f.cwnd += delta;
                    } else {
                        f.cwnd += delta / f.cwnd;
                    }
                }
                match f.recovery_point {
                    Some(rp) if cum >= rp => f.recovery_point = None,
                    // Partial ack inside recovery: the next hole is real,
                    // resend it immediately.
                    Some(_) => do_retx = f.permitted && f.in_flight() > 0,
                    None => {}
                }
                if f.await_drain && f.in_flight() == 0 {
                    f.await_drain = false;
                }
            } else if f.next_seq > f.snd_una {
                f.dup_acks += 1;
                if f.dup_acks == 3 && f.recovery_point.is_none() && f.permitted {
                    f.recovery_point = Some(f.next_seq);
                    if f.class == FlowClass::First {
                        f.ssthresh = (f.in_flight() as f64 / 2.0).max(2.0);
                        f.cwnd = f.ssthresh;
                    }
                    do_retx = true;
                }
            }
        }
        if do_retx {
            self.retransmit(flow);
        }
        self.try_emit(flow);
    }

    fn rto_of(&self, flow: u32) -> Nanos {
        let f = &self.flows[flow as usize];
        let base = match f.class {
            FlowClass::First => self.params.minrto_class1_ns,
            FlowClass::Second => self.params.minrto_class2_ns,
        };
        base * f.rto_backoff as u64
    }

    /// Lazy retransmission timer: at most one outstanding event per flow; a
    /// firing that finds the deadline pushed out just re-sleeps.
    fn arm_rto(&mut self, flow: u32) {
        let deadline = self.now + self.rto_of(flow);
        let f = &mut self.flows[flow as usize];
        f.rto_deadline = deadline;
        if !f.rto_pending {
            f.rto_pending = true;
            self.queue.schedule(deadline, Ev::Rto { flow });
        }
    }

    fn on_rto(&mut self, flow: u32) {
        enum Action {
            Drop,
            Sleep(Nanos),
            Fire,
        }
        let action = {
            let f = &mut self.flows[flow as usize];
            f.rto_pending = false;
            if f.in_flight() == 0 {
                Action::Drop
            } else if self.now < f.rto_deadline {
                Action::Sleep(f.rto_deadline)
            } else if !f.permitted {
                // Stopped flows must not spray retransmissions onto paths the
                // MAN has granted to others; check again next period.
                Action::Sleep(self.now + self.rto_of(flow))
            } else {
                Action::Fire
            }
        };
        match action {
            Action::Drop => {}
            Action::Sleep(at) => {
                let f = &mut self.flows[flow as usize];
                f.rto_deadline = at;
                f.rto_pending = true;
                self.queue.schedule(at, Ev::Rto { flow });
            }
            Action::Fire => {
                {
                    let f = &mut self.flows[flow as usize];
                    if f.class == FlowClass::First {
                        f.ssthresh = (f.cwnd / 2.0).max(2.0);
                        f.cwnd = 1.0;
                    }
                    f.recovery_point = Some(f.next_seq);
                    f.rto_backoff = (f.rto_backoff * 2).min(64);
                }
                self.retransmit(flow);
                let deadline = self.now + self.rto_of(flow);
                let f = &mut self.flows[flow as usize];
                f.rto_deadline = deadline;
                f.rto_pending = true;
                self.queue.schedule(deadline, Ev::Rto { flow });
            }
        }
    }

    // ---- PFC ------------------------------------------------------------

    fn pfc_check_raise(&mut self, link: LinkId) {
        if !self.params.pfc_enabled {
            return;
        }
        let node = {
            let pause_at = self.params.pause_pkts;
            let port = &mut self.ports[link as usize];
            // Host NICs absorb their own window inflation; only switch
            // ports emit PAUSE.
            if port.unbounded || port.asserting || port.occupancy() < pause_at {
                return;
            }
            port.asserting = true;
            port.src_node as usize
        };
        self.node_assert[node] += 1;
        if self.node_assert[node] == 1 {
            self.send_pfc(node, true);
        }
    }

    fn pfc_check_release(&mut self, link: LinkId) {
        if !self.params.pfc_enabled {
            return;
        }
        let node = {
            let resume_at = self.params.resume_pkts;
            let port = &mut self.ports[link as usize];
            if !port.asserting || port.occupancy() > resume_at {
                return;
            }
            port.asserting = false;
            port.src_node as usize
        };
        self.node_assert[node] -= 1;
        if self.node_assert[node] == 0 {
            self.send_pfc(node, false);
        }
    }

    /// PAUSE/RESUME to every upstream sender, effective after one link
    /// propagation delay. Pause cascades hop by hop down to host NICs.
    fn send_pfc(&mut self, node: usize, pause: bool) {
        if pause {
            self.pfc_pauses += 1;
        }
        for i in 0..self.inbound[node].len() {
            let l = self.inbound[node][i];
            let delay = self.topo.link(l).delay_ns;
            self.queue.schedule(self.now + delay, Ev::Pfc { port: l, pause });
        }
    }

    fn on_pfc(&mut self, port: LinkId, pause: bool) {
        self.ports[port as usize].paused_c2 = pause;
        if !pause {
            self.try_serve(port);
        }
    }

    // ---- validation helpers ----------------------------------------------

    fn wire_track(&mut self, link: LinkId, flow: u32, route: u8, delta: i32) {
        let entries = &mut self.wire_c2[link as usize];
        match entries.iter_mut().position(|(f, r, _)| *f == flow && *r == route) {
            Some(i) => {
                let count = entries[i].2 as i32 + delta;
                if count <= 0 {
                    entries.remove(i);
                } else {
                    entries[i].2 = count as u32;
                }
            }
            None if delta > 0 => entries.push((flow, route, delta as u32)),
            None => {}
        }
    }

    /// At most one *live* permitted 2nd-class flow may have payload on a link
    /// at any instant. Three kinds of drain traffic are exempt: packets of
    /// stopped flows, packets past a FIN (the MAN has already released the
    /// path), and packets on a superseded route version (the flow was stopped
    /// and re-granted elsewhere; the old tail empties out on its own).
    fn check_exclusive(&mut self, link: LinkId, flow: u32, route: u8) {
        let live = |f: &FlowRt, route: u8| {
            f.permitted && !f.fin_sent && route as usize + 1 == f.routes.len()
        };
        if !live(&self.flows[flow as usize], route) {
            return;
        }
        let mut offender = None;
        for &(other, other_route, _) in &self.wire_c2[link as usize] {
            if other != flow && live(&self.flows[other as usize], other_route) {
                offender = Some(other);
            }
        }
        if let Some(other) = offender {
            self.violations.push(format!(
                "link {link} carries permitted class-2 flows {flow} and {other} at {} ns",
                self.now
            ));
        }
    }
}
