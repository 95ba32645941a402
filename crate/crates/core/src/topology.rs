//! Parameterized 3-tier fat-tree fabrics with shortest-path enumeration and
//! flow-based ECMP.
//!
//! The fabric is a directed graph: one physical cable is two [`Link`]s. For a
//! fat-tree with switch port count `k`, every host pair is connected by all
//! equal-length shortest paths — one per core switch for inter-pod pairs
//! ((k/2)^2 of them), one per aggregation switch inside a pod (k/2), and a
//! single 2-hop path under a shared edge switch. Paths between edge switches
//! are precomputed at build time; host-level paths splice the host links on
//! demand.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;
pub type LinkId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Host { pod: u32 },
    EdgeSwitch { pod: u32 },
    AggSwitch { pod: u32 },
    CoreSwitch,
}

impl NodeKind {
    pub fn is_host(&self) -> bool {
        matches!(self, NodeKind::Host { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// One direction of a cable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub src_node: NodeId,
    pub dst_node: NodeId,
    /// Bits per second. Must be positive.
    pub capacity_bps: u64,
    /// One-way propagation delay in nanoseconds.
    pub delay_ns: u64,
}

/// An ordered list of link ids from the source host NIC to the destination
/// host NIC. Always contiguous and cycle-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("fat-tree k must be even and >= 4, got {0}")]
    BadK(u32),
    #[error("hosts_per_edge must be >= 1")]
    BadHostsPerEdge,
    #[error("link capacity must be positive")]
    BadCapacity,
    #[error("node {0} is not a host")]
    NotAHost(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("source and destination must differ")]
    SameEndpoints,
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

enum PathSource {
    /// Core fabric segments between edge switches, keyed by (src_edge, dst_edge).
    FatTree {
        edge_segments: HashMap<(NodeId, NodeId), Vec<Vec<LinkId>>>,
    },
    /// Explicit per-pair path table, used for hand-built fabrics in tests and
    /// for non-fat-tree experiments.
    Table {
        paths: HashMap<(NodeId, NodeId), Vec<Path>>,
    },
}

pub struct Topology {
    pub k: u32,
    pub hosts_per_edge: u32,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    hosts: Vec<NodeId>,
    /// host -> (uplink host->edge, downlink edge->host, edge switch)
    host_attach: HashMap<NodeId, (LinkId, LinkId, NodeId)>,
    source: PathSource,
}

impl Topology {
    /// Builds a 3-tier fat-tree: (k/2)^2 core switches, k pods of k/2 edge and
    /// k/2 aggregation switches, and `hosts_per_edge` hosts per edge switch.
    /// All links share one capacity and one propagation delay.
    pub fn fat_tree(
        k: u32,
        hosts_per_edge: u32,
        capacity_bps: u64,
        delay_ns: u64,
    ) -> Result<Arc<Self>, TopologyError> {
        if k < 4 || k % 2 != 0 {
            return Err(TopologyError::BadK(k));
        }
        if hosts_per_edge < 1 {
            return Err(TopologyError::BadHostsPerEdge);
        }
        if capacity_bps == 0 {
            return Err(TopologyError::BadCapacity);
        }

        let half = k / 2;
        let n_hosts = k * half * hosts_per_edge;
        let n_edge = k * half;
        let n_agg = k * half;

        let mut nodes = Vec::new();
        // Hosts first so host ids are dense from zero: pod-major, then edge,
        // then slot.
        for pod in 0..k {
            for _edge in 0..half {
                for _slot in 0..hosts_per_edge {
                    nodes.push(Node {
                        id: nodes.len() as NodeId,
                        kind: NodeKind::Host { pod },
                    });
                }
            }
        }
        let edge_base = nodes.len() as NodeId;
        for pod in 0..k {
            for _ in 0..half {
                nodes.push(Node {
                    id: nodes.len() as NodeId,
                    kind: NodeKind::EdgeSwitch { pod },
                });
            }
        }
        let agg_base = nodes.len() as NodeId;
        for pod in 0..k {
            for _ in 0..half {
                nodes.push(Node {
                    id: nodes.len() as NodeId,
                    kind: NodeKind::AggSwitch { pod },
                });
            }
        }
        let core_base = nodes.len() as NodeId;
        for _group in 0..half {
            for _idx in 0..half {
                nodes.push(Node {
                    id: nodes.len() as NodeId,
                    kind: NodeKind::CoreSwitch,
                });
            }
        }

        let host_id = |pod: u32, edge: u32, slot: u32| -> NodeId {
            (pod * half + edge) * hosts_per_edge + slot
        };
        let edge_id = |pod: u32, e: u32| -> NodeId { edge_base + pod * half + e };
        let agg_id = |pod: u32, a: u32| -> NodeId { agg_base + pod * half + a };
        // Aggregation switch `a` of every pod connects to core group `a`.
        let core_id = |group: u32, idx: u32| -> NodeId { core_base + group * half + idx };

        let mut links = Vec::new();
        let mut link_of = HashMap::new();
        let mut connect = |a: NodeId, b: NodeId| {
            for (s, d) in [(a, b), (b, a)] {
                let id = links.len() as LinkId;
                links.push(Link {
                    id,
                    src_node: s,
                    dst_node: d,
                    capacity_bps,
                    delay_ns,
                });
                link_of.insert((s, d), id);
            }
        };

        for pod in 0..k {
            for e in 0..half {
                for slot in 0..hosts_per_edge {
                    connect(host_id(pod, e, slot), edge_id(pod, e));
                }
            }
            for e in 0..half {
                for a in 0..half {
                    connect(edge_id(pod, e), agg_id(pod, a));
                }
            }
            for a in 0..half {
                for c in 0..half {
                    connect(agg_id(pod, a), core_id(a, c));
                }
            }
        }

        debug_assert_eq!(nodes.len() as u32, n_hosts + n_edge + n_agg + half * half);

        // Precompute the switch-level segments between every pair of distinct
        // edge switches, ordered by aggregation then core switch id.
        let mut edge_segments = HashMap::new();
        let l = |a: NodeId, b: NodeId| -> LinkId { link_of[&(a, b)] };
        for sp in 0..k {
            for se in 0..half {
                for dp in 0..k {
                    for de in 0..half {
                        let (src_e, dst_e) = (edge_id(sp, se), edge_id(dp, de));
                        if src_e == dst_e {
                            continue;
                        }
                        let mut segs = Vec::new();
                        if sp == dp {
                            for a in 0..half {
                                segs.push(vec![
                                    l(src_e, agg_id(sp, a)),
                                    l(agg_id(sp, a), dst_e),
                                ]);
                            }
                        } else {
                            for a in 0..half {
                                for c in 0..half {
                                    segs.push(vec![
                                        l(src_e, agg_id(sp, a)),
                                        l(agg_id(sp, a), core_id(a, c)),
                                        l(core_id(a, c), agg_id(dp, a)),
                                        l(agg_id(dp, a), dst_e),
                                    ]);
                                }
                            }
                        }
                        edge_segments.insert((src_e, dst_e), segs);
                    }
                }
            }
        }

        let mut host_attach = HashMap::new();
        let mut hosts = Vec::new();
        for pod in 0..k {
            for e in 0..half {
                for slot in 0..hosts_per_edge {
                    let h = host_id(pod, e, slot);
                    let ed = edge_id(pod, e);
                    host_attach.insert(h, (link_of[&(h, ed)], link_of[&(ed, h)], ed));
                    hosts.push(h);
                }
            }
        }

        Ok(Arc::new(Topology {
            k,
            hosts_per_edge,
            nodes,
            links,
            hosts,
            host_attach,
            source: PathSource::FatTree { edge_segments },
        }))
    }

    /// Builds an arbitrary fabric from explicit parts. Hosts are the nodes
    /// with a `Host` kind; `paths` lists the usable paths per (src, dst) host
    /// pair. Every path is validated for contiguity and cycle freedom.
    pub fn custom(
        nodes: Vec<Node>,
        links: Vec<Link>,
        paths: HashMap<(NodeId, NodeId), Vec<Path>>,
    ) -> Result<Arc<Self>, TopologyError> {
        for (i, link) in links.iter().enumerate() {
            if link.id as usize != i {
                return Err(TopologyError::InvalidPath(format!(
                    "link ids must be dense, found {} at index {}",
                    link.id, i
                )));
            }
            if link.capacity_bps == 0 {
                return Err(TopologyError::BadCapacity);
            }
        }
        let mut host_attach = HashMap::new();
        let mut hosts = Vec::new();
        for node in &nodes {
            if node.kind.is_host() {
                let up = links
                    .iter()
                    .find(|l| l.src_node == node.id)
                    .ok_or_else(|| {
                        TopologyError::InvalidPath(format!("host {} has no uplink", node.id))
                    })?;
                let down = links
                    .iter()
                    .find(|l| l.dst_node == node.id)
                    .ok_or_else(|| {
                        TopologyError::InvalidPath(format!("host {} has no downlink", node.id))
                    })?;
                host_attach.insert(node.id, (up.id, down.id, up.dst_node));
                hosts.push(node.id);
            }
        }
        let topo = Topology {
            k: 0,
            hosts_per_edge: 0,
            nodes,
            links,
            hosts,
            host_attach,
            source: PathSource::Table { paths },
        };
        if let PathSource::Table { paths } = &topo.source {
            for ((s, d), list) in paths {
                for p in list {
                    topo.validate_path(*s, *d, p)?;
                }
            }
        }
        Ok(Arc::new(topo))
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn switch_count(&self) -> usize {
        self.nodes.len() - self.hosts.len()
    }

    pub fn hosts(&self) -> &[NodeId] {
        &self.hosts
    }

    pub fn is_host(&self, n: NodeId) -> bool {
        self.host_attach.contains_key(&n)
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id as usize]
    }

    /// The host's NIC uplink (host -> edge switch).
    pub fn host_uplink(&self, host: NodeId) -> Result<LinkId, TopologyError> {
        self.host_attach
            .get(&host)
            .map(|(up, _, _)| *up)
            .ok_or(TopologyError::NotAHost(host))
    }

    /// All equal-length shortest paths between two hosts, deterministically
    /// ordered by aggregation then core switch id.
    pub fn enumerate_paths(&self, src: NodeId, dst: NodeId) -> Result<Vec<Path>, TopologyError> {
        if src == dst {
            return Err(TopologyError::SameEndpoints);
        }
        let (s_up, _, s_edge) = *self
            .host_attach
            .get(&src)
            .ok_or(TopologyError::NotAHost(src))?;
        let (_, d_down, d_edge) = *self
            .host_attach
            .get(&dst)
            .ok_or(TopologyError::NotAHost(dst))?;

        match &self.source {
            PathSource::Table { paths } => Ok(paths.get(&(src, dst)).cloned().unwrap_or_default()),
            PathSource::FatTree { edge_segments } => {
                if s_edge == d_edge {
                    return Ok(vec![Path {
                        links: vec![s_up, d_down],
                    }]);
                }
                let segs = &edge_segments[&(s_edge, d_edge)];
                Ok(segs
                    .iter()
                    .map(|seg| {
                        let mut links = Vec::with_capacity(seg.len() + 2);
                        links.push(s_up);
                        links.extend_from_slice(seg);
                        links.push(d_down);
                        Path { links }
                    })
                    .collect())
            }
        }
    }

    /// Checks contiguity, endpoints, and node uniqueness of a path.
    pub fn validate_path(
        &self,
        src: NodeId,
        dst: NodeId,
        path: &Path,
    ) -> Result<(), TopologyError> {
        if path.links.is_empty() {
            return Err(TopologyError::InvalidPath("empty".into()));
        }
        let mut seen = vec![src];
        let mut at = src;
        for &lid in &path.links {
            let link = self
                .links
                .get(lid as usize)
                .ok_or_else(|| TopologyError::InvalidPath(format!("unknown link {lid}")))?;
            if link.src_node != at {
                return Err(TopologyError::InvalidPath(format!(
                    "link {lid} starts at {} but path is at {at}",
                    link.src_node
                )));
            }
            at = link.dst_node;
            if seen.contains(&at) {
                return Err(TopologyError::InvalidPath(format!("node {at} repeated")));
            }
            seen.push(at);
        }
        if at != dst {
            return Err(TopologyError::InvalidPath(format!(
                "path ends at {at}, expected {dst}"
            )));
        }
        Ok(())
    }

    /// Flow-based ECMP: a pure function of the flow key. Identical keys always
    /// map to the same path; over many keys the choice is near-uniform.
    pub fn ecmp_select<'a>(
        &self,
        flow_key: (NodeId, NodeId, u16, u16),
        paths: &'a [Path],
    ) -> &'a Path {
        assert!(!paths.is_empty(), "ecmp_select needs at least one path");
        let idx = ecmp_hash(flow_key) % paths.len() as u64;
        &paths[idx as usize]
    }

    /// Plain-text adjacency listing: one "link_id src dst capacity delay" line
    /// per link.
    pub fn adjacency_dump(&self) -> String {
        let mut out = String::new();
        for l in &self.links {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                l.id, l.src_node, l.dst_node, l.capacity_bps, l.delay_ns
            );
        }
        out
    }

    /// Max over links of capacity divided by min over links, rounded up: the
    /// most line-rate flows that can share one link. 1 on homogeneous fabrics.
    pub fn rate_spread(&self) -> u64 {
        let max = self.links.iter().map(|l| l.capacity_bps).max().unwrap_or(1);
        let min = self.links.iter().map(|l| l.capacity_bps).min().unwrap_or(1);
        max.div_ceil(min)
    }

    /// Longest shortest-path length in links (6 for a 3-tier fat-tree).
    pub fn max_path_len(&self) -> u32 {
        match &self.source {
            PathSource::FatTree { .. } => 6,
            PathSource::Table { paths } => paths
                .values()
                .flat_map(|v| v.iter().map(|p| p.len() as u32))
                .max()
                .unwrap_or(0),
        }
    }
}

/// Stable 64-bit FNV-1a over the flow key, finished with a splitmix64 mixer
/// so the low bits used for modulo selection are well distributed. Never use
/// `DefaultHasher` here: it is randomized per process.
pub fn ecmp_hash(key: (NodeId, NodeId, u16, u16)) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&key.0.to_le_bytes());
    eat(&key.1.to_le_bytes());
    eat(&key.2.to_le_bytes());
    eat(&key.3.to_le_bytes());
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e3779b97f4a7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_counts() {
        let t = Topology::fat_tree(8, 8, 1_000_000_000, 25_000).unwrap();
        assert_eq!(t.switch_count(), 80);
        assert_eq!(t.host_count(), 256);
    }

    #[test]
    fn canonical_counts() {
        let t = Topology::fat_tree(8, 4, 1_000_000_000, 25_000).unwrap();
        assert_eq!(t.switch_count(), 80);
        assert_eq!(t.host_count(), 128);

        let t = Topology::fat_tree(4, 2, 1_000_000_000, 25_000).unwrap();
        assert_eq!(t.switch_count(), 20);
        assert_eq!(t.host_count(), 16);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            Topology::fat_tree(5, 2, 1, 0),
            Err(TopologyError::BadK(5))
        ));
        assert!(matches!(
            Topology::fat_tree(4, 0, 1, 0),
            Err(TopologyError::BadHostsPerEdge)
        ));
        assert!(matches!(
            Topology::fat_tree(4, 2, 0, 0),
            Err(TopologyError::BadCapacity)
        ));
    }

    fn k4() -> Arc<Topology> {
        Topology::fat_tree(4, 2, 1_000_000_000, 25_000).unwrap()
    }

    #[test]
    fn path_counts_by_locality() {
        let t = k4();
        // hosts 0 and 1 share an edge switch
        let same_edge = t.enumerate_paths(0, 1).unwrap();
        assert_eq!(same_edge.len(), 1);
        assert_eq!(same_edge[0].len(), 2);

        // hosts 0 and 2 are in the same pod, different edges
        let same_pod = t.enumerate_paths(0, 2).unwrap();
        assert_eq!(same_pod.len(), 2);
        assert!(same_pod.iter().all(|p| p.len() == 4));

        // hosts 0 and 4 are in different pods
        let inter_pod = t.enumerate_paths(0, 4).unwrap();
        assert_eq!(inter_pod.len(), 4);
        assert!(inter_pod.iter().all(|p| p.len() == 6));
    }

    #[test]
    fn every_path_is_valid_and_unique() {
        let t = k4();
        for &src in t.hosts() {
            for &dst in t.hosts() {
                if src == dst {
                    continue;
                }
                let paths = t.enumerate_paths(src, dst).unwrap();
                for p in &paths {
                    t.validate_path(src, dst, p).unwrap();
                }
                for i in 0..paths.len() {
                    for j in i + 1..paths.len() {
                        assert_ne!(paths[i], paths[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_unknown_hosts_and_self_pairs() {
        let t = k4();
        assert!(t.enumerate_paths(0, 0).is_err());
        // node 16 is the first edge switch
        assert!(t.enumerate_paths(16, 0).is_err());
        assert!(t.enumerate_paths(0, 9999).is_err());
    }

    #[test]
    fn ecmp_single_path_and_determinism() {
        let t = k4();
        let paths = t.enumerate_paths(0, 1).unwrap();
        let p = t.ecmp_select((0, 1, 1234, 80), &paths);
        assert_eq!(p, &paths[0]);

        let paths = t.enumerate_paths(0, 4).unwrap();
        let a = t.ecmp_select((0, 4, 555, 80), &paths).clone();
        let b = t.ecmp_select((0, 4, 555, 80), &paths).clone();
        assert_eq!(a, b);
    }

    #[test]
    fn adjacency_dump_lists_every_link() {
        let t = k4();
        let dump = t.adjacency_dump();
        assert_eq!(dump.lines().count(), t.links.len());
        let first = dump.lines().next().unwrap();
        let fields: Vec<&str> = first.split_whitespace().collect();
        assert_eq!(fields.len(), 5);
    }
}
