//! Flow arrival traces: empirical size distributions loaded from CDF files,
//! synthetic bounded-Pareto sizes, Poisson arrivals scaled to a target load,
//! and uniform-random endpoint pairs.

use std::io::{BufRead, Write};
use std::path::Path as FsPath;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::threshold::SizeDistribution;
use crate::topology::{NodeId, Topology};
use crate::Nanos;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("distribution file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("bounded-Pareto needs 0 < L < U, got L={l} U={u}")]
    BadBounds { l: f64, u: f64 },
    #[error("target fraction {target} below 100KB is infeasible for L={l}, U={u} (minimum {min})")]
    InfeasibleFraction { target: f64, l: f64, u: f64, min: f64 },
    #[error("target_load must be in (0,1), got {0}")]
    BadLoad(f64),
    #[error("topology has fewer than two hosts")]
    TooFewHosts,
}

/// Bounded-Pareto flow sizes on [l, u] bytes with shape `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedPareto {
    pub alpha: f64,
    pub l: f64,
    pub u: f64,
}

impl BoundedPareto {
    pub fn new(alpha: f64, l: f64, u: f64) -> Result<Self, WorkloadError> {
        if !(l > 0.0 && l < u) {
            return Err(WorkloadError::BadBounds { l, u });
        }
        Ok(BoundedPareto { alpha, l, u })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.l {
            return 0.0;
        }
        if x >= self.u {
            return 1.0;
        }
        // 1 - (l/x)^a over 1 - (l/u)^a, both via expm1 for small alpha.
        let num = -f64::exp_m1(self.alpha * (self.l / x).ln());
        let den = -f64::exp_m1(self.alpha * (self.l / self.u).ln());
        num / den
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let den = -f64::exp_m1(self.alpha * (self.l / self.u).ln());
        self.l * (-f64::ln_1p(-p * den) / self.alpha).exp()
    }

    pub fn mean(&self) -> f64 {
        let a = self.alpha;
        let den = -f64::exp_m1(a * (self.l / self.u).ln());
        if (a - 1.0).abs() < 1e-9 {
            return self.l * (self.u / self.l).ln() / den;
        }
        let la = self.l.powf(a);
        a * la * (self.u.powf(1.0 - a) - self.l.powf(1.0 - a)) / ((1.0 - a) * den)
    }
}

/// The size bracket the synthetic workloads are specified against.
pub const SMALL_FLOW_REF_BYTES: f64 = 100_000.0;

const ALPHA_MIN: f64 = 1e-9;
const ALPHA_MAX: f64 = 64.0;

/// Solves for the shape that puts `frac_below_100kb` of flows under 100 KB.
///
/// The fraction is monotone increasing in alpha; as alpha approaches zero the
/// distribution degenerates to log-uniform, which is the infimum. Targets at
/// that boundary (within 1e-4) clamp to the smallest representable shape.
pub fn fit_bounded_pareto(
    frac_below_100kb: f64,
    l: f64,
    u: f64,
) -> Result<BoundedPareto, WorkloadError> {
    if !(l > 0.0 && l < SMALL_FLOW_REF_BYTES && SMALL_FLOW_REF_BYTES < u) {
        return Err(WorkloadError::BadBounds { l, u });
    }
    let frac_at = |alpha: f64| BoundedPareto { alpha, l, u }.cdf(SMALL_FLOW_REF_BYTES);
    let f_min = frac_at(ALPHA_MIN);
    if frac_below_100kb < f_min {
        if f_min - frac_below_100kb <= 1e-4 {
            return BoundedPareto::new(ALPHA_MIN, l, u);
        }
        return Err(WorkloadError::InfeasibleFraction {
            target: frac_below_100kb,
            l,
            u,
            min: f_min,
        });
    }
    if frac_below_100kb >= 1.0 {
        return Err(WorkloadError::InfeasibleFraction {
            target: frac_below_100kb,
            l,
            u,
            min: f_min,
        });
    }
    let (mut lo, mut hi) = (ALPHA_MIN, ALPHA_MAX);
    while hi - lo > 1e-12 && (hi - lo) / hi > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if frac_at(mid) < frac_below_100kb {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BoundedPareto::new(0.5 * (lo + hi), l, u)
}

/// How flow sizes are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SizeModel {
    Empirical(SizeDistribution),
    BoundedPareto(BoundedPareto),
}

impl SizeModel {
    pub fn mean_bytes(&self) -> f64 {
        match self {
            SizeModel::Empirical(d) => d.mean_bytes(),
            SizeModel::BoundedPareto(bp) => bp.mean(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let x = match self {
            SizeModel::Empirical(d) => d.quantile(u),
            SizeModel::BoundedPareto(bp) => bp.quantile(u),
        };
        (x.round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub model: SizeModel,
    /// Fraction of the edge-link capacity each host injects on average.
    pub target_load: f64,
    pub flows: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFlow {
    pub arrival_ns: Nanos,
    pub src: NodeId,
    pub dst: NodeId,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowTrace {
    pub flows: Vec<TraceFlow>,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn duration_ns(&self) -> Nanos {
        self.flows.last().map(|f| f.arrival_ns).unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.flows.iter().map(|f| f.bytes).sum()
    }

    /// CSV export: `arrival_s,src,dst,bytes`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "arrival_s,src,dst,bytes")?;
        for f in &self.flows {
            writeln!(
                w,
                "{},{},{},{}",
                f.arrival_ns as f64 / 1e9,
                f.src,
                f.dst,
                f.bytes
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, WorkloadError> {
        let mut flows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse = |why: &str| WorkloadError::Parse {
                line: i + 1,
                msg: why.to_string(),
            };
            let mut parts = line.split(',');
            let (Some(t), Some(src), Some(dst), Some(bytes), None) = (
                parts.next(),
                parts.next(),
                parts.next(),
                parts.next(),
                parts.next(),
            ) else {
                return Err(parse("expected `arrival_s,src,dst,bytes`"));
            };
            let t: f64 = t.parse().map_err(|_| parse("bad arrival"))?;
            flows.push(TraceFlow {
                arrival_ns: (t * 1e9).round() as Nanos,
                src: src.parse().map_err(|_| parse("bad src"))?,
                dst: dst.parse().map_err(|_| parse("bad dst"))?,
                bytes: bytes.parse().map_err(|_| parse("bad bytes"))?,
            });
        }
        Ok(FlowTrace { flows })
    }
}

/// Per-host Poisson arrival rate that realizes `target_load` on the edge
/// links: load x line_rate / mean_size_bits.
pub fn per_host_arrival_rate(spec: &WorkloadSpec, line_rate_bps: u64) -> f64 {
    spec.target_load * line_rate_bps as f64 / (spec.model.mean_bytes() * 8.0)
}

/// Draws the trace: exponential inter-arrivals at the aggregate rate, source
/// uniform over hosts, destination uniform over the other hosts, sizes from
/// the model. Deterministic for a given seed.
pub fn generate_trace(spec: &WorkloadSpec, topo: &Topology) -> Result<FlowTrace, WorkloadError> {
    if !(spec.target_load > 0.0 && spec.target_load < 1.0) {
        return Err(WorkloadError::BadLoad(spec.target_load));
    }
    let hosts = topo.hosts();
    if hosts.len() < 2 {
        return Err(WorkloadError::TooFewHosts);
    }
    let line_rate = topo
        .link(topo.host_uplink(hosts[0]).expect("host uplink"))
        .capacity_bps;
    let lambda_total = per_host_arrival_rate(spec, line_rate) * hosts.len() as f64;
    let inter = Exp::new(lambda_total).expect("positive rate");

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut t = 0.0f64;
    let mut flows = Vec::with_capacity(spec.flows);
    for _ in 0..spec.flows {
        t += inter.sample(&mut rng);
        let si = rng.gen_range(0..hosts.len());
        let off = rng.gen_range(0..hosts.len() - 1);
        let di = (si + 1 + off) % hosts.len();
        let bytes = spec.model.sample(&mut rng);
        flows.push(TraceFlow {
            arrival_ns: (t * 1e9).round() as Nanos,
            src: hosts[si],
            dst: hosts[di],
            bytes,
        });
    }
    Ok(FlowTrace { flows })
}

/// Reads a distribution file: one `size_bytes cumulative_probability` pair
/// per line, `#` comments allowed, sizes ascending.
pub fn load_size_distribution(path: &FsPath) -> Result<SizeDistribution, WorkloadError> {
    let file = std::fs::File::open(path)?;
    parse_size_distribution(std::io::BufReader::new(file))
}

pub fn parse_size_distribution<R: BufRead>(reader: R) -> Result<SizeDistribution, WorkloadError> {
    let mut knots = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let (Some(s), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(WorkloadError::Parse {
                line: i + 1,
                msg: "expected `size_bytes cumulative_probability`".into(),
            });
        };
        let s: f64 = s.parse().map_err(|e| WorkloadError::Parse {
            line: i + 1,
            msg: format!("bad size: {e}"),
        })?;
        let p: f64 = p.parse().map_err(|e| WorkloadError::Parse {
            line: i + 1,
            msg: format!("bad probability: {e}"),
        })?;
        knots.push((s, p));
    }
    SizeDistribution::from_knots(knots).map_err(|e| WorkloadError::BadDistribution(e.to_string()))
}
