//! Shared test fixtures and independent oracles.
//!
//! The oracles deliberately avoid the library's scheduling code paths: the
//! exclusive-link scheduler is a mechanical event loop over link ownership,
//! the SRPT queue is a direct single-server simulation, and the max-min
//! checker tests the definition rather than re-running water-filling.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use hyline::topology::{Link, LinkId, Node, NodeId, NodeKind, Path, Topology};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

// ---------------------------------------------------------------------------
// hand-built fabrics

/// Builder for small explicit fabrics: hosts hang off switches, middle links
/// are wired by hand, and the usable paths per host pair are spelled out.
pub struct Gadget {
    nodes: Vec<Node>,
    links: Vec<Link>,
    paths: HashMap<(NodeId, NodeId), Vec<Path>>,
    default_cap: u64,
}

pub const GBIT: u64 = 1_000_000_000;

impl Gadget {
    pub fn new() -> Self {
        Gadget {
            nodes: Vec::new(),
            links: Vec::new(),
            paths: HashMap::new(),
            default_cap: GBIT,
        }
    }

    pub fn host(&mut self) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            id,
            kind: NodeKind::Host { pod: 0 },
        });
        id
    }

    pub fn switch(&mut self) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            id,
            kind: NodeKind::EdgeSwitch { pod: 0 },
        });
        id
    }

    pub fn link(&mut self, a: NodeId, b: NodeId, cap: u64) -> LinkId {
        let id = self.links.len() as LinkId;
        self.links.push(Link {
            id,
            src_node: a,
            dst_node: b,
            capacity_bps: cap,
            delay_ns: 1_000,
        });
        id
    }

    /// Host with both directions to `sw`; returns (uplink, downlink).
    pub fn attach(&mut self, sw: NodeId) -> (NodeId, LinkId, LinkId) {
        let h = self.host();
        let cap = self.default_cap;
        let up = self.link(h, sw, cap);
        let down = self.link(sw, h, cap);
        (h, up, down)
    }

    pub fn route(&mut self, src: NodeId, dst: NodeId, paths: Vec<Vec<LinkId>>) {
        self.paths.insert(
            (src, dst),
            paths.into_iter().map(|links| Path { links }).collect(),
        );
    }

    pub fn build(self) -> Arc<Topology> {
        Topology::custom(self.nodes, self.links, self.paths).expect("valid gadget")
    }
}

// ---------------------------------------------------------------------------
// exclusive-link schedule oracle

/// One flow of the cost-model world: a remaining size in integer units and
/// the links it needs exclusively while transmitting.
#[derive(Debug, Clone)]
pub struct XFlow {
    pub links: Vec<usize>,
    pub size: u64,
}

/// Mechanically schedules the instance at unit rate with exclusive link
/// ownership and returns every completion time, the new flow's last.
///
/// Existing flows hold their (pairwise disjoint) links from t = 0. Without
/// preemption the new flow acquires its whole path once every link is free;
/// with preemption it takes the path at t = 0 and the evicted flows
/// re-acquire their links when free.
pub fn exclusive_schedule(existing: &[XFlow], new: &XFlow, preempt: bool) -> Vec<u64> {
    for (i, a) in existing.iter().enumerate() {
        for b in existing.iter().skip(i + 1) {
            assert!(
                a.links.iter().all(|l| !b.links.contains(l)),
                "oracle instances need disjoint existing flows"
            );
        }
    }

    #[derive(Debug)]
    struct St {
        links: Vec<usize>,
        remaining: u64,
        running: bool,
        fct: Option<u64>,
    }
    let mut flows: Vec<St> = existing
        .iter()
        .chain(std::iter::once(new))
        .map(|f| St {
            links: f.links.clone(),
            remaining: f.size,
            running: false,
            fct: None,
        })
        .collect();
    let new_idx = flows.len() - 1;
    let mut owner: HashMap<usize, usize> = HashMap::new();

    let try_start = |i: usize, flows: &mut [St], owner: &mut HashMap<usize, usize>| {
        if flows[i].running || flows[i].fct.is_some() {
            return;
        }
        if flows[i].links.iter().all(|l| !owner.contains_key(l)) {
            for &l in &flows[i].links {
                owner.insert(l, i);
            }
            flows[i].running = true;
        }
    };

    for i in 0..new_idx {
        try_start(i, &mut flows, &mut owner);
        assert!(flows[i].running);
    }
    if preempt {
        let new_links = flows[new_idx].links.clone();
        for l in new_links {
            if let Some(&o) = owner.get(&l) {
                for &ol in &flows[o].links.clone() {
                    owner.remove(&ol);
                }
                flows[o].running = false;
            }
        }
    }
    try_start(new_idx, &mut flows, &mut owner);
    if preempt {
        assert!(flows[new_idx].running, "preemptive start must succeed");
    }

    let mut t = 0u64;
    while flows.iter().any(|f| f.fct.is_none()) {
        let dt = flows
            .iter()
            .filter(|f| f.running)
            .map(|f| f.remaining)
            .min()
            .expect("no progress: oracle instance deadlocked");
        t += dt;
        for i in 0..flows.len() {
            if flows[i].running {
                flows[i].remaining -= dt;
                if flows[i].remaining == 0 {
                    flows[i].running = false;
                    flows[i].fct = Some(t);
                    for &l in &flows[i].links.clone() {
                        owner.remove(&l);
                    }
                }
            }
        }
        for i in 0..flows.len() {
            try_start(i, &mut flows, &mut owner);
        }
    }
    flows.into_iter().map(|f| f.fct.unwrap()).collect()
}

/// Total FCT over all flows for the chosen mode.
pub fn exclusive_total(existing: &[XFlow], new: &XFlow, preempt: bool) -> u64 {
    exclusive_schedule(existing, new, preempt).iter().sum()
}

// ---------------------------------------------------------------------------
// M/G/1/SRPT first-wait oracle

pub struct SrptEstimate {
    pub mean_first_wait: f64,
    pub mean_service: f64,
    pub samples: usize,
}

/// Simulates a preemptive shortest-remaining-first single-server queue with
/// Poisson arrivals and measures the time from arrival to first service for
/// jobs whose size falls in `window` (as original service time).
pub fn srpt_first_wait<F: FnMut(&mut ChaCha8Rng) -> f64>(
    lambda: f64,
    mut sample_service: F,
    n_jobs: usize,
    window: (f64, f64),
    seed: u64,
) -> SrptEstimate {
    #[derive(Debug)]
    struct Job {
        arrival: f64,
        orig: f64,
        remaining: f64,
        first_service: Option<f64>,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inter = Exp::new(lambda).expect("positive lambda");

    let mut active: Vec<Job> = Vec::new();
    let mut t = 0.0f64;
    let mut next_arrival = inter.sample(&mut rng);
    let mut arrived = 0usize;
    let (mut wait_sum, mut svc_sum, mut samples) = (0.0f64, 0.0f64, 0usize);

    while arrived < n_jobs || !active.is_empty() {
        // Preemptive SRPT: the in-service job is always the smallest
        // remaining (ties to the earlier arrival).
        let served = active
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| {
                (a.remaining, *ia)
                    .partial_cmp(&(b.remaining, *ib))
                    .unwrap()
            })
            .map(|(i, _)| i);
        if let Some(i) = served {
            if active[i].first_service.is_none() {
                active[i].first_service = Some(t);
            }
        }
        let completion = served.map(|i| t + active[i].remaining);
        let arrival = (arrived < n_jobs).then_some(next_arrival);

        match (arrival, completion) {
            (Some(ta), Some(tc)) if ta < tc => {
                if let Some(i) = served {
                    active[i].remaining -= ta - t;
                }
                t = ta;
                active.push(Job {
                    arrival: t,
                    orig: sample_service(&mut rng),
                    remaining: 0.0,
                    first_service: None,
                });
                let n = active.len();
                active[n - 1].remaining = active[n - 1].orig;
                arrived += 1;
                next_arrival = t + inter.sample(&mut rng);
            }
            (_, Some(tc)) => {
                let i = served.unwrap();
                t = tc;
                let job = active.swap_remove(i);
                if job.orig >= window.0 && job.orig <= window.1 {
                    wait_sum += job.first_service.unwrap() - job.arrival;
                    svc_sum += job.orig;
                    samples += 1;
                }
            }
            (Some(ta), None) => {
                t = ta;
                active.push(Job {
                    arrival: t,
                    orig: 0.0,
                    remaining: 0.0,
                    first_service: None,
                });
                let n = active.len();
                let orig = sample_service(&mut rng);
                active[n - 1].orig = orig;
                active[n - 1].remaining = orig;
                arrived += 1;
                next_arrival = t + inter.sample(&mut rng);
            }
            (None, None) => unreachable!("loop guard"),
        }
    }
    SrptEstimate {
        mean_first_wait: wait_sum / samples.max(1) as f64,
        mean_service: svc_sum / samples.max(1) as f64,
        samples,
    }
}

/// Measures SRPT first-wait around `x_bytes` (a +/-7.5% window) against the
/// density-weighted average of the closed-form prediction over the same
/// window. Returns (monte carlo, predicted, samples).
pub fn srpt_agreement(
    dist: &hyline::threshold::SizeDistribution,
    link_bps: u64,
    rho: f64,
    x_bytes: f64,
    n_jobs: usize,
    seed: u64,
) -> (f64, f64, usize) {
    use hyline::threshold::{expected_wait, ThresholdInputs};
    let inputs = ThresholdInputs::new(dist, link_bps, rho, 100e-6).unwrap();
    let window = (
        inputs.service_time((x_bytes * 0.925) as u64),
        inputs.service_time((x_bytes * 1.075) as u64),
    );
    let quant = dist.clone();
    let est = srpt_first_wait(
        inputs.lambda,
        move |rng| {
            let u: f64 = rng.gen::<f64>();
            quant.quantile(u) * 8.0 / link_bps as f64
        },
        n_jobs,
        window,
        seed,
    );
    let (lo_b, hi_b) = (x_bytes * 0.925, x_bytes * 1.075);
    let steps = 32;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..steps {
        let a = lo_b + (hi_b - lo_b) * i as f64 / steps as f64;
        let b = lo_b + (hi_b - lo_b) * (i + 1) as f64 / steps as f64;
        let w = dist.cdf(b) - dist.cdf(a);
        if w > 0.0 {
            num += w * expected_wait(&inputs, (0.5 * (a + b)) as u64).unwrap();
            den += w;
        }
    }
    (est.mean_first_wait, num / den, est.samples)
}

// ---------------------------------------------------------------------------
// max-min fairness checker

/// Verifies the max-min definition directly: the allocation is feasible and
/// every flow has a saturated link on which it is (one of) the largest.
pub fn check_max_min(
    links: &[(f64, Vec<usize>)],
    rates: &[f64],
    tol: f64,
) -> Result<(), String> {
    for (li, (cap, flows)) in links.iter().enumerate() {
        let used: f64 = flows.iter().map(|&f| rates[f]).sum();
        if used > cap * (1.0 + tol) {
            return Err(format!("link {li} oversubscribed: {used} > {cap}"));
        }
    }
    for (f, &rate) in rates.iter().enumerate() {
        let mut has_bottleneck = false;
        for (cap, flows) in links {
            if !flows.contains(&f) {
                continue;
            }
            let used: f64 = flows.iter().map(|&g| rates[g]).sum();
            let saturated = used >= cap * (1.0 - tol);
            let is_top = flows.iter().all(|&g| rates[g] <= rate * (1.0 + tol));
            if saturated && is_top {
                has_bottleneck = true;
                break;
            }
        }
        if !has_bottleneck {
            return Err(format!(
                "flow {f} at rate {rate} has no bottleneck and could grow"
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// misc

/// Coefficient of determination of the least-squares line through the points.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Draws sizes from a distribution quantile function, for KS-style checks.
pub fn sample_quantiles<Q: Fn(f64) -> f64>(q: Q, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| q(rng.gen::<f64>())).collect()
}
