//! Per-run results: one record per flow plus run-level counters, with CSV
//! import/export. The CSV layout is stable and byte-reproducible for a given
//! (config, seed) pair.

use std::io::{Read, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub class: u8,
    pub bytes: u64,
    pub arrival_s: f64,
    pub start_s: f64,
    pub finish_s: f64,
    pub path_len: u32,
    pub retx: u32,
    pub preemptions: u32,
    pub wait_s: f64,
    pub stopped_s: f64,
}

impl FlowRecord {
    pub fn fct_s(&self) -> f64 {
        self.finish_s - self.arrival_s
    }
}

/// Run-level counters that do not fit the per-flow table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub drops_class1: u64,
    pub drops_class2: u64,
    pub man_requests: u64,
    pub man_grants: u64,
    pub man_preemptions: u64,
    pub man_rejections: u64,
    pub findpath_calls: u64,
    pub path_evals_total: u64,
    pub max_evals_per_findpath: u64,
    pub admitted_second_class: u64,
    pub pfc_pause_events: u64,
    pub events_processed: u64,
    pub sim_end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scheme: String,
    pub records: Vec<FlowRecord>,
    pub meta: RunMeta,
}

impl RunReport {
    /// True for the idealized fluid baselines, whose records have no packet
    /// or propagation terms.
    pub fn is_fluid(&self) -> bool {
        self.scheme.starts_with("baseline")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &FsPath) -> Result<(), ReportError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(scheme: &str, r: R) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for rec in rdr.deserialize() {
            records.push(rec?);
        }
        Ok(RunReport {
            scheme: scheme.to_string(),
            records,
            meta: RunMeta::default(),
        })
    }

    pub fn read_csv_file(scheme: &str, path: &FsPath) -> Result<Self, ReportError> {
        Self::read_csv(scheme, std::fs::File::open(path)?)
    }
}
