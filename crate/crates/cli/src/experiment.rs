//! Experiment-level configuration: one simulation plus optional sweep axes,
//! and the sweep/aggregation machinery shared by `sweep` and `report`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hyline::config::{HylineCfg, SimConfig, SwitchCfg, TopologyCfg, TransportCfg, WorkloadCfg};
use hyline::metrics::{
    man_telemetry, read_summary_csv, summarize, write_man_stats_csv, write_summary_csv,
    MetricsSummary, SummaryRow, OVERALL_LABEL,
};
use hyline::report::RunReport;
use hyline::sim::{run, SchedulerMode, SimError, SimParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCfg {
    pub loads: Vec<f64>,
    pub schemes: Vec<String>,
    pub seeds: Vec<u64>,
}

/// A full experiment file: the per-run sections plus the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: String,
    pub topology: TopologyCfg,
    pub hyline: HylineCfg,
    pub switch: SwitchCfg,
    pub transport: TransportCfg,
    pub workload: WorkloadCfg,
    pub sweep: SweepCfg,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = SimConfig::default();
        ExperimentConfig {
            mode: base.mode,
            topology: base.topology,
            hyline: base.hyline,
            switch: base.switch,
            transport: base.transport,
            workload: base.workload,
            sweep: SweepCfg::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.to_sim_config(None, None, None)?.validate()?;
        Ok(cfg)
    }

    /// One cell of the grid as a plain simulation config.
    pub fn to_sim_config(
        &self,
        scheme: Option<&str>,
        load: Option<f64>,
        seed: Option<u64>,
    ) -> Result<SimConfig> {
        let mut workload = self.workload.clone();
        if let Some(l) = load {
            workload.load = l;
        }
        if let Some(s) = seed {
            workload.seed = s;
        }
        Ok(SimConfig {
            mode: scheme.unwrap_or(&self.mode).to_string(),
            topology: self.topology.clone(),
            hyline: self.hyline.clone(),
            switch: self.switch.clone(),
            transport: self.transport.clone(),
            workload,
        })
    }

    pub fn grid(&self) -> Vec<(String, f64, u64)> {
        let schemes = if self.sweep.schemes.is_empty() {
            vec![self.mode.clone()]
        } else {
            self.sweep.schemes.clone()
        };
        let loads = if self.sweep.loads.is_empty() {
            vec![self.workload.load]
        } else {
            self.sweep.loads.clone()
        };
        let seeds = if self.sweep.seeds.is_empty() {
            vec![self.workload.seed]
        } else {
            self.sweep.seeds.clone()
        };
        let mut cells = Vec::new();
        for scheme in &schemes {
            for &load in &loads {
                for &seed in &seeds {
                    cells.push((scheme.clone(), load, seed));
                }
            }
        }
        cells
    }
}

pub fn cell_dir(out: &Path, scheme: &str, load: f64, seed: u64) -> PathBuf {
    out.join(format!("{scheme}_l{load:.2}_s{seed}"))
}

/// Executes one simulation and writes its artifacts into `dir`. Returns the
/// metrics summary written alongside the raw report.
pub fn run_cell(cfg: &SimConfig, dir: &Path, validate: bool) -> Result<(RunReport, MetricsSummary)> {
    fs::create_dir_all(dir)?;
    let (topo, trace) = cfg.build()?;
    let mode = cfg.mode()?;
    let mut params: SimParams = cfg.sim_params();
    params.validate = validate;
    let report = run(&topo, &trace, mode, &params).map_err(map_sim_error)?;

    report.write_csv_file(&dir.join("report.csv"))?;
    let summary = summarize(&report, &topo);
    let file = fs::File::create(dir.join("summary.csv"))?;
    write_summary_csv(file, mode.name(), cfg.workload.load, &summary)?;
    if mode == SchedulerMode::Hyline {
        let file = fs::File::create(dir.join("man_stats.csv"))?;
        write_man_stats_csv(file, &man_telemetry(&report))?;
    }
    Ok((report, summary))
}

fn map_sim_error(e: SimError) -> anyhow::Error {
    anyhow::Error::new(e)
}

/// Collects cell summaries under `out` into one merged per-cell table plus
/// across-seed aggregates. Works from files so interrupted sweeps can be
/// re-aggregated.
pub fn aggregate(out: &Path, cells: &[(String, f64, u64)]) -> Result<(usize, usize)> {
    let mut merged: Vec<(String, f64, u64, SummaryRow)> = Vec::new();
    let mut missing = 0usize;
    for (scheme, load, seed) in cells {
        let path = cell_dir(out, scheme, *load, *seed).join("summary.csv");
        if !path.exists() {
            missing += 1;
            continue;
        }
        let rows = read_summary_csv(fs::File::open(&path)?)?;
        for row in rows {
            merged.push((scheme.clone(), *load, *seed, row));
        }
    }

    // merged_summary.csv holds the overall row of every completed cell
    let mut w = csv::Writer::from_path(out.join("merged_summary.csv"))?;
    #[derive(Serialize)]
    struct MergedRow<'a> {
        scheme: &'a str,
        load: f64,
        seed: u64,
        mean_nfct: f64,
        p99_nfct: f64,
        count: u64,
        app_tput: f64,
    }
    let mut n_rows = 0usize;
    for (scheme, load, seed, row) in merged.iter().filter(|(_, _, _, r)| r.bin == OVERALL_LABEL) {
        w.serialize(MergedRow {
            scheme,
            load: *load,
            seed: *seed,
            mean_nfct: row.mean_nfct,
            p99_nfct: row.p99_nfct,
            count: row.count,
            app_tput: row.app_tput,
        })?;
        n_rows += 1;
    }
    w.flush()?;

    // aggregates.csv: mean and stddev across seeds per (scheme, load, bin)
    let mut groups: BTreeMap<(String, String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for (scheme, load, _seed, row) in &merged {
        groups
            .entry((scheme.clone(), format!("{load:.4}"), row.bin.clone()))
            .or_default()
            .push(row);
    }
    let mut w = csv::Writer::from_path(out.join("aggregates.csv"))?;
    #[derive(Serialize)]
    struct AggRow {
        scheme: String,
        load: f64,
        bin: String,
        seeds: usize,
        mean_nfct: f64,
        sd_nfct: f64,
        mean_p99_nfct: f64,
        sd_p99_nfct: f64,
        mean_app_tput: f64,
    }
    for ((scheme, load, bin), rows) in groups {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&SummaryRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let sd = |f: &dyn Fn(&SummaryRow) -> f64, m: f64| {
            (rows.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        let m_n = mean(&|r: &SummaryRow| r.mean_nfct);
        let m_p = mean(&|r: &SummaryRow| r.p99_nfct);
        w.serialize(AggRow {
            scheme,
            load: load.parse().unwrap_or(0.0),
            bin,
            seeds: rows.len(),
            mean_nfct: m_n,
            sd_nfct: sd(&|r: &SummaryRow| r.mean_nfct, m_n),
            mean_p99_nfct: m_p,
            sd_p99_nfct: sd(&|r: &SummaryRow| r.p99_nfct, m_p),
            mean_app_tput: mean(&|r: &SummaryRow| r.app_tput),
        })?;
    }
    w.flush()?;
    Ok((n_rows, missing))
}

/// Discovers cell directories left by previous sweeps, for `report`.
pub fn discover_cells(out: &Path) -> Result<Vec<(String, f64, u64)>> {
    let mut cells = Vec::new();
    for entry in fs::read_dir(out)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        let Some((scheme, rest)) = name.rsplit_once("_l").map(|(s, r)| (s.to_string(), r)) else {
            continue;
        };
        let Some((load, seed)) = rest.split_once("_s") else {
            continue;
        };
        let (Ok(load), Ok(seed)) = (load.parse::<f64>(), seed.parse::<u64>()) else {
            continue;
        };
        if entry.path().join("summary.csv").exists() {
            cells.push((scheme, load, seed));
        }
    }
    if cells.is_empty() {
        bail!("no completed cells under {}", out.display());
    }
    cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(cells)
}
