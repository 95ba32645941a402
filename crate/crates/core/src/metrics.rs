//! Evaluation quantities: normalized FCT statistics per size bin, 99th
//! percentiles, application throughput against 4x-ideal deadlines, and
//! manager telemetry.
//!
//! Packet-level runs are normalized by the packet ideal (propagation plus
//! serialization plus store-and-forward on an empty fabric); fluid baseline
//! runs are normalized by the fluid ideal (pure serialization at line rate),
//! so normalized FCT is >= 1 for both and cross-scheme comparisons stay
//! directional.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::report::{FlowRecord, ReportError, RunReport};
use crate::topology::{NodeId, Topology};
use crate::{serialization_ns, Nanos};

pub const PKT_BYTES: u64 = 1500;

/// Deadline multiplier for application throughput: a flow meets its deadline
/// if it finishes within 4x its ideal completion time.
pub const DEADLINE_MULT: f64 = 4.0;

/// Fraction of flows (by arrival order) excluded from aggregates as warm-up.
pub const WARMUP_FRAC: f64 = 0.10;

/// Size bin boundaries in bytes: (0,100KB], (100KB,1MB], (1MB,10MB], (10MB,inf).
pub const BIN_EDGES: [u64; 3] = [100_000, 1_000_000, 10_000_000];
pub const BIN_LABELS: [&str; 4] = ["0-100KB", "100KB-1MB", "1MB-10MB", "10MB-inf"];
pub const OVERALL_LABEL: &str = "all";

pub fn bin_of(bytes: u64) -> usize {
    BIN_EDGES.iter().position(|&e| bytes <= e).unwrap_or(3)
}

/// Ideal FCT of a flow on an empty fabric: one-way propagation along the
/// path, full-size serialization at line rate, and one store-and-forward of
/// the trailing packet per intermediate hop.
pub fn ideal_fct_ns(topo: &Topology, src: NodeId, dst: NodeId, bytes: u64) -> Nanos {
    let paths = topo
        .enumerate_paths(src, dst)
        .expect("ideal_fct needs valid endpoints");
    let path = &paths[0];
    let prop: Nanos = path.links.iter().map(|&l| topo.link(l).delay_ns).sum();
    let rate = topo.link(path.links[0]).capacity_bps;
    prop + serialization_ns(bytes, rate)
        + (path.len() as u64 - 1) * serialization_ns(store_forward_bytes(bytes), rate)
}

/// Same formula from a record's path length, for homogeneous fabrics where
/// the pair identity does not matter.
pub fn ideal_from_path_len(topo: &Topology, path_len: u32, bytes: u64) -> Nanos {
    let link = topo.link(0);
    path_len as u64 * link.delay_ns
        + serialization_ns(bytes, link.capacity_bps)
        + (path_len.max(1) as u64 - 1)
            * serialization_ns(store_forward_bytes(bytes), link.capacity_bps)
}

/// Fluid ideal: serialization at line rate, nothing else.
pub fn fluid_ideal_ns(bytes: u64, rate_bps: u64) -> Nanos {
    serialization_ns(bytes, rate_bps)
}

/// Each intermediate hop re-serializes one packet. A smaller trailing packet
/// still rides the full-packet cadence behind its predecessor, so the unit
/// is a full MTU whenever the flow has one.
fn store_forward_bytes(bytes: u64) -> u64 {
    bytes.min(PKT_BYTES)
}

/// Nearest-rank percentile: the ceil(q*n)-th smallest value.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("NaN percentile input"));
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: String,
    pub count: u64,
    pub mean_nfct: f64,
    pub p99_nfct: f64,
    pub app_tput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// Non-empty bins only, in size order.
    pub per_bin: Vec<BinStats>,
    pub overall: BinStats,
    /// Raw (unnormalized) mean FCT in seconds over the measured flows.
    pub raw_mean_fct_s: f64,
}

/// Indices of the records that survive warm-up exclusion, by arrival order.
fn measured_indices(records: &[FlowRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .arrival_s
            .partial_cmp(&records[b].arrival_s)
            .unwrap()
            .then(records[a].flow_id.cmp(&records[b].flow_id))
    });
    let skip = (records.len() as f64 * WARMUP_FRAC).floor() as usize;
    order.into_iter().skip(skip).collect()
}

pub fn summarize(report: &RunReport, topo: &Topology) -> MetricsSummary {
    summarize_with_deadline(report, topo, DEADLINE_MULT)
}

pub fn summarize_with_deadline(
    report: &RunReport,
    topo: &Topology,
    deadline_mult: f64,
) -> MetricsSummary {
    let fluid = report.is_fluid();
    let line_rate = topo.link(0).capacity_bps;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut met: [u64; 4] = [0; 4];
    let mut raw_sum = 0.0;
    let mut n = 0u64;

    for &i in &measured_indices(&report.records) {
        let r = &report.records[i];
        let ideal_ns = if fluid {
            fluid_ideal_ns(r.bytes, line_rate)
        } else {
            ideal_from_path_len(topo, r.path_len, r.bytes)
        };
        let ideal_s = ideal_ns as f64 / 1e9;
        let nfct = r.fct_s() / ideal_s;
        let b = bin_of(r.bytes);
        bins[b].push(nfct);
        if r.fct_s() <= deadline_mult * ideal_s {
            met[b] += 1;
        }
        raw_sum += r.fct_s();
        n += 1;
    }

    let mut per_bin = Vec::new();
    let mut all: Vec<f64> = Vec::new();
    let mut all_met = 0u64;
    for (b, values) in bins.iter_mut().enumerate() {
        if values.is_empty() {
            continue;
        }
        let count = values.len() as u64;
        let mean = values.iter().sum::<f64>() / count as f64;
        let p99 = nearest_rank(values, 0.99);
        per_bin.push(BinStats {
            bin: BIN_LABELS[b].to_string(),
            count,
            mean_nfct: mean,
            p99_nfct: p99,
            app_tput: met[b] as f64 / count as f64,
        });
        all_met += met[b];
        all.extend_from_slice(values);
    }
    let overall = if all.is_empty() {
        BinStats {
            bin: OVERALL_LABEL.into(),
            count: 0,
            mean_nfct: 0.0,
            p99_nfct: 0.0,
            app_tput: 0.0,
        }
    } else {
        let count = all.len() as u64;
        let mean = all.iter().sum::<f64>() / count as f64;
        let p99 = nearest_rank(&mut all, 0.99);
        BinStats {
            bin: OVERALL_LABEL.into(),
            count,
            mean_nfct: mean,
            p99_nfct: p99,
            app_tput: all_met as f64 / count as f64,
        }
    };
    MetricsSummary {
        per_bin,
        overall,
        raw_mean_fct_s: if n == 0 { 0.0 } else { raw_sum / n as f64 },
    }
}

/// One row of the summary CSV: `scheme,load,bin,mean_nfct,p99_nfct,count,app_tput`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub load: f64,
    pub bin: String,
    pub mean_nfct: f64,
    pub p99_nfct: f64,
    pub count: u64,
    pub app_tput: f64,
}

pub fn write_summary_csv<W: Write>(
    w: W,
    scheme: &str,
    load: f64,
    summary: &MetricsSummary,
) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    for b in summary.per_bin.iter().chain(std::iter::once(&summary.overall)) {
        out.serialize(SummaryRow {
            scheme: scheme.to_string(),
            load,
            bin: b.bin.clone(),
            mean_nfct: b.mean_nfct,
            p99_nfct: b.p99_nfct,
            count: b.count,
            app_tput: b.app_tput,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<SummaryRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManBinStats {
    pub bin: String,
    pub count: u64,
    pub mean_wait_s: f64,
    pub mean_stopped_s: f64,
    pub mean_preemptions: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManTelemetry {
    pub requests_per_s: f64,
    pub per_bin: Vec<ManBinStats>,
    pub overall: ManBinStats,
}

/// Manager-side statistics over the 2nd-class flows of a run: waiting time
/// (arrival to first CTS), stopped time (STS-to-CTS intervals), and
/// preemptions per flow, per size bin.
pub fn man_telemetry(report: &RunReport) -> ManTelemetry {
    let mut acc: Vec<(u64, f64, f64, f64)> = vec![(0, 0.0, 0.0, 0.0); 5];
    for &i in &measured_indices(&report.records) {
        let r = &report.records[i];
        if r.class != 2 {
            continue;
        }
        for idx in [bin_of(r.bytes), 4] {
            let slot = &mut acc[idx];
            slot.0 += 1;
            slot.1 += r.wait_s;
            slot.2 += r.stopped_s;
            slot.3 += r.preemptions as f64;
        }
    }
    let stats = |label: &str, (count, w, s, p): (u64, f64, f64, f64)| ManBinStats {
        bin: label.to_string(),
        count,
        mean_wait_s: if count > 0 { w / count as f64 } else { 0.0 },
        mean_stopped_s: if count > 0 { s / count as f64 } else { 0.0 },
        mean_preemptions: if count > 0 { p / count as f64 } else { 0.0 },
    };
    let per_bin = (0..4)
        .filter(|&b| acc[b].0 > 0)
        .map(|b| stats(BIN_LABELS[b], acc[b]))
        .collect();
    let duration = report.meta.sim_end_s;
    ManTelemetry {
        requests_per_s: if duration > 0.0 {
            report.meta.man_requests as f64 / duration
        } else {
            0.0
        },
        per_bin,
        overall: stats(OVERALL_LABEL, acc[4]),
    }
}

pub fn write_man_stats_csv<W: Write>(w: W, t: &ManTelemetry) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    #[derive(Serialize)]
    struct Row<'a> {
        bin: &'a str,
        count: u64,
        requests_per_s: f64,
        mean_wait_s: f64,
        mean_stopped_s: f64,
        mean_preemptions: f64,
    }
    for b in t.per_bin.iter().chain(std::iter::once(&t.overall)) {
        out.serialize(Row {
            bin: &b.bin,
            count: b.count,
            requests_per_s: t.requests_per_s,
            mean_wait_s: b.mean_wait_s,
            mean_stopped_s: b.mean_stopped_s,
            mean_preemptions: b.mean_preemptions,
        })?;
    }
    out.flush()?;
    Ok(())
}
