//! Structured run configuration (TOML). Unknown keys are rejected so typos
//! fail loudly before any simulation starts.

use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SchedulerMode, SimParams};
use crate::topology::Topology;
use crate::workload::{
    fit_bounded_pareto, generate_trace, load_size_distribution, BoundedPareto, FlowTrace,
    SizeModel, WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Inter-pod one-way shortest paths cross six links; the end-to-end RTT
/// target is split evenly over the twelve hops of the round trip.
pub const INTER_POD_RTT_HOPS: u64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyCfg {
    pub k: u32,
    pub hosts_per_edge: u32,
    pub link_gbps: f64,
    pub rtt_us: f64,
}

impl Default for TopologyCfg {
    fn default() -> Self {
        TopologyCfg {
            k: 4,
            hosts_per_edge: 2,
            link_gbps: 1.0,
            rtt_us: 300.0,
        }
    }
}

impl TopologyCfg {
    pub fn link_bps(&self) -> u64 {
        (self.link_gbps * 1e9).round() as u64
    }

    pub fn link_delay_ns(&self) -> u64 {
        ((self.rtt_us * 1_000.0).round() as u64) / INTER_POD_RTT_HOPS
    }

    pub fn build(&self) -> Result<Arc<Topology>, ConfigError> {
        Topology::fat_tree(
            self.k,
            self.hosts_per_edge,
            self.link_bps(),
            self.link_delay_ns(),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HylineCfg {
    pub h_bytes: u64,
    pub t_cost_us: f64,
}

impl Default for HylineCfg {
    fn default() -> Self {
        HylineCfg {
            h_bytes: 1_000_000,
            t_cost_us: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchCfg {
    pub buffer_pkts: usize,
    pub pause_pkts: usize,
    pub resume_pkts: usize,
    pub pfc_enabled: bool,
}

impl Default for SwitchCfg {
    fn default() -> Self {
        SwitchCfg {
            buffer_pkts: 225,
            pause_pkts: 215,
            resume_pkts: 205,
            pfc_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportCfg {
    pub init_window: u32,
    pub minrto_ms_class1: f64,
    pub minrto_s_class2: f64,
}

impl Default for TransportCfg {
    fn default() -> Self {
        TransportCfg {
            init_window: 25,
            minrto_ms_class1: 4.0,
            minrto_s_class2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoCfg {
    /// Either give the shape directly...
    pub alpha: Option<f64>,
    /// ...or the fraction of flows below 100 KB to fit it from.
    pub frac_below_100kb: Option<f64>,
    /// Bounds default to 1 KB and 100 MB, spanning all four size bins.
    #[serde(default = "default_pareto_l")]
    pub l_bytes: f64,
    #[serde(default = "default_pareto_u")]
    pub u_bytes: f64,
}

fn default_pareto_l() -> f64 {
    1e3
}

fn default_pareto_u() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadCfg {
    /// Empirical CDF file; mutually exclusive with `pareto`.
    pub file: Option<PathBuf>,
    pub pareto: Option<ParetoCfg>,
    pub load: f64,
    pub flows: usize,
    pub seed: u64,
}

impl Default for WorkloadCfg {
    fn default() -> Self {
        WorkloadCfg {
            file: None,
            pareto: None,
            load: 0.6,
            flows: 1_000,
            seed: 1,
        }
    }
}

/// Everything one simulation needs. The CLI layers sweep axes on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub mode: String,
    pub topology: TopologyCfg,
    pub hyline: HylineCfg,
    pub switch: SwitchCfg,
    pub transport: TransportCfg,
    pub workload: WorkloadCfg,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: "hyline".into(),
            topology: TopologyCfg::default(),
            hyline: HylineCfg::default(),
            switch: SwitchCfg::default(),
            transport: TransportCfg::default(),
            workload: WorkloadCfg::default(),
        }
    }
}

impl SimConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mode()?;
        if self.topology.k < 4 || self.topology.k % 2 != 0 {
            return Err(ConfigError::Invalid(format!(
                "topology.k must be even and >= 4, got {}",
                self.topology.k
            )));
        }
        if !(self.workload.load > 0.0 && self.workload.load < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "workload.load must be in (0,1), got {}",
                self.workload.load
            )));
        }
        if self.workload.file.is_some() == self.workload.pareto.is_some() {
            return Err(ConfigError::Invalid(
                "workload needs exactly one of `file` or `pareto`".into(),
            ));
        }
        if self.switch.resume_pkts > self.switch.pause_pkts
            || self.switch.pause_pkts > self.switch.buffer_pkts
        {
            return Err(ConfigError::Invalid(
                "switch thresholds must satisfy resume <= pause <= buffer".into(),
            ));
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<SchedulerMode, ConfigError> {
        SchedulerMode::parse(&self.mode)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown mode `{}`", self.mode)))
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            h_bytes: self.hyline.h_bytes,
            t_cost_ns: (self.hyline.t_cost_us * 1_000.0).round() as u64,
            buffer_pkts: self.switch.buffer_pkts,
            pause_pkts: self.switch.pause_pkts,
            resume_pkts: self.switch.resume_pkts,
            pfc_enabled: self.switch.pfc_enabled,
            init_window: self.transport.init_window,
            minrto_class1_ns: (self.transport.minrto_ms_class1 * 1e6).round() as u64,
            minrto_class2_ns: (self.transport.minrto_s_class2 * 1e9).round() as u64,
            man_seed: self.workload.seed,
            validate: false,
        }
    }

    pub fn size_model(&self) -> Result<SizeModel, ConfigError> {
        if let Some(file) = &self.workload.file {
            let dist =
                load_size_distribution(file).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            return Ok(SizeModel::Empirical(dist));
        }
        let p = self.workload.pareto.as_ref().expect("validated");
        let bp = match (p.alpha, p.frac_below_100kb) {
            (Some(alpha), None) => BoundedPareto::new(alpha, p.l_bytes, p.u_bytes),
            (None, Some(frac)) => fit_bounded_pareto(frac, p.l_bytes, p.u_bytes),
            _ => {
                return Err(ConfigError::Invalid(
                    "pareto needs exactly one of `alpha` or `frac_below_100kb`".into(),
                ))
            }
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(SizeModel::BoundedPareto(bp))
    }

    pub fn workload_spec(&self) -> Result<WorkloadSpec, ConfigError> {
        Ok(WorkloadSpec {
            model: self.size_model()?,
            target_load: self.workload.load,
            flows: self.workload.flows,
            rng_seed: self.workload.seed,
        })
    }

    /// Builds topology and trace together.
    pub fn build(&self) -> Result<(Arc<Topology>, FlowTrace), ConfigError> {
        let topo = self.topology.build()?;
        let trace = generate_trace(&self.workload_spec()?, &topo)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((topo, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = SimConfig {
            workload: WorkloadCfg {
                pareto: Some(ParetoCfg {
                    alpha: Some(1.1),
                    frac_below_100kb: None,
                    l_bytes: 1e3,
                    u_bytes: 1e8,
                }),
                ..WorkloadCfg::default()
            },
            ..SimConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back = SimConfig::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "mode = \"hyline\"\n[topology]\nk = 4\nbogus_knob = 1\n";
        assert!(SimConfig::from_str(text).is_err());
    }

    #[test]
    fn workload_source_is_exclusive() {
        let text = "[workload]\nload = 0.5\n";
        assert!(SimConfig::from_str(text).is_err());
    }

    #[test]
    fn rtt_split_over_twelve_hops() {
        let t = TopologyCfg::default();
        assert_eq!(t.link_delay_ns(), 25_000);
    }
}
