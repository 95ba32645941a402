//! `hyline` command line: single runs, (scheme x load x seed) sweeps,
//! threshold-band analysis, and re-aggregation of existing results.

mod experiment;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use experiment::{aggregate, cell_dir, discover_cells, run_cell, ExperimentConfig};
use hyline::config::ConfigError;
use hyline::sim::SimError;
use hyline::threshold::{compute_band, expected_wait, load_fraction_below, ThresholdInputs};
use hyline::workload::load_size_distribution;

#[derive(Parser)]
#[command(name = "hyline", about = "Flow-scheduling simulator for multipath datacenter fabrics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one simulation and write report.csv + summary.csv.
    Run(RunArgs),
    /// Run the full (scheme x load x seed) grid from the config's [sweep].
    Sweep(SweepArgs),
    /// Compute the class-threshold band for a size distribution.
    Threshold(ThresholdArgs),
    /// Re-aggregate summaries from completed cells in a sweep directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the run artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the workload seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the workload load.
    #[arg(long)]
    load: Option<f64>,
    /// Override the scheme (hyline | baseline_fair | baseline_srpt).
    #[arg(long)]
    mode: Option<String>,
    /// Worker threads (accepted for symmetry with sweep; a single run is
    /// one simulation).
    #[arg(long)]
    jobs: Option<usize>,
    /// Enable the engine's self-checking hooks.
    #[arg(long)]
    validate: bool,
    /// Also write the generated trace as trace.csv.
    #[arg(long)]
    dump_trace: bool,
    /// Also write the fabric adjacency listing as topology.txt.
    #[arg(long)]
    dump_topology: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parallel cells; defaults to the number of grid cells capped by the
    /// available cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Distribution file: `size_bytes cumulative_probability` per line.
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    c_gbps: f64,
    #[arg(long, default_value_t = 100.0)]
    t_cost_us: f64,
    /// Static threshold the band report is anchored on.
    #[arg(long, default_value_t = 1_000_000)]
    h_bytes: u64,
    /// Comma-separated load grid, e.g. 0.1,0.2,0.6.
    #[arg(long, default_value = "0.6")]
    loads: String,
    /// Write the (load, x, E[W], load fraction) table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep directory with completed cells.
    #[arg(long)]
    dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Threshold(args) => cmd_threshold(args),
        Cmd::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(sim) = cause.downcast_ref::<SimError>() {
            return match sim {
                SimError::Deadlock { .. } => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
            || cause.downcast_ref::<hyline::threshold::ThresholdError>().is_some()
        {
            return 2;
        }
    }
    1
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let sim = cfg.to_sim_config(args.mode.as_deref(), args.load, args.seed)?;
    sim.validate()?;
    fs::create_dir_all(&args.out)?;

    if args.dump_topology {
        let topo = sim.topology.build()?;
        fs::write(args.out.join("topology.txt"), topo.adjacency_dump())?;
    }
    if args.dump_trace {
        let (_, trace) = sim.build()?;
        let mut file = fs::File::create(args.out.join("trace.csv"))?;
        trace.write_csv(&mut file)?;
    }

    let (report, summary) = run_cell(&sim, &args.out, args.validate)?;
    println!(
        "scheme={} load={} seed={} flows={}",
        report.scheme,
        sim.workload.load,
        sim.workload.seed,
        report.records.len()
    );
    for b in summary.per_bin.iter().chain([&summary.overall]) {
        println!(
            "bin={} count={} mean_nfct={:.4} p99_nfct={:.4} app_tput={:.4}",
            b.bin, b.count, b.mean_nfct, b.p99_nfct, b.app_tput
        );
    }
    let m = &report.meta;
    println!(
        "drops_class1={} drops_class2={} pfc_pauses={} man_requests={} man_grants={} man_preemptions={} path_evals={}",
        m.drops_class1,
        m.drops_class2,
        m.pfc_pause_events,
        m.man_requests,
        m.man_grants,
        m.man_preemptions,
        m.path_evals_total
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let cells = cfg.grid();
    fs::create_dir_all(&args.out)?;

    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let jobs = args.jobs.unwrap_or_else(|| cells.len().min(cores)).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;

    let results: Vec<(String, Option<String>)> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|(scheme, load, seed)| {
                let name = format!("{scheme} load={load} seed={seed}");
                let dir = cell_dir(&args.out, scheme, *load, *seed);
                if dir.join("summary.csv").exists() {
                    println!("cell {name}: cached");
                    return (name, None);
                }
                let sim = match cfg
                    .to_sim_config(Some(scheme), Some(*load), Some(*seed))
                    .and_then(|s| s.validate().map(|_| s).map_err(Into::into))
                {
                    Ok(s) => s,
                    Err(e) => return (name, Some(format!("{e:#}"))),
                };
                match run_cell(&sim, &dir, args.validate) {
                    Ok((report, _)) => {
                        println!(
                            "cell {name}: done ({} flows, {} drops c2)",
                            report.records.len(),
                            report.meta.drops_class2
                        );
                        (name, None)
                    }
                    Err(e) => {
                        let msg = format!("{e:#}");
                        let _ = fs::create_dir_all(&dir);
                        let _ = fs::write(dir.join("FAILED"), &msg);
                        (name, Some(msg))
                    }
                }
            })
            .collect()
    });

    let (rows, missing) = aggregate(&args.out, &cells)?;
    println!("merged {} cells into merged_summary.csv ({} missing)", rows, missing);

    let failures: Vec<&(String, Option<String>)> =
        results.iter().filter(|(_, err)| err.is_some()).collect();
    if !failures.is_empty() {
        for (name, err) in &failures {
            eprintln!("cell {name} failed: {}", err.as_deref().unwrap_or(""));
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_threshold(args: ThresholdArgs) -> Result<ExitCode> {
    let dist = load_size_distribution(&args.dist)
        .with_context(|| format!("loading {}", args.dist.display()))?;
    let c_bps = (args.c_gbps * 1e9).round() as u64;
    let t_cost_s = args.t_cost_us * 1e-6;
    let loads: Vec<f64> = args
        .loads
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("parsing --loads"))
        .collect::<Result<_>>()?;
    let single = loads.len() == 1;

    let mut csv_out = match &args.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["load", "x_bytes", "expected_wait_s", "load_fraction", "saturated"])?;
            Some(w)
        }
        None => None,
    };

    for &load in &loads {
        let inputs = ThresholdInputs::new(&dist, c_bps, load, t_cost_s)?;
        match compute_band(&inputs, args.h_bytes) {
            Ok(band) => {
                if single {
                    println!("{} {}", band.h_low, band.h_high);
                } else {
                    println!("{load} {} {}", band.h_low, band.h_high);
                }
            }
            Err(e) => {
                if single {
                    println!("empty");
                } else {
                    println!("{load} empty");
                }
                eprintln!("load {load}: {e}");
            }
        }

        if let Some(w) = csv_out.as_mut() {
            // log-spaced curve from 1 KB up to the distribution maximum
            let max = dist.max_size();
            let points = 72;
            for i in 0..=points {
                let x = 1_000.0 * (max / 1_000.0).powf(i as f64 / points as f64);
                let x_bytes = x.round() as u64;
                let frac = load_fraction_below(&inputs, x_bytes);
                match expected_wait(&inputs, x_bytes) {
                    Ok(ew) => w.write_record([
                        format!("{load}"),
                        format!("{x_bytes}"),
                        format!("{ew}"),
                        format!("{frac}"),
                        "0".into(),
                    ])?,
                    Err(_) => w.write_record([
                        format!("{load}"),
                        format!("{x_bytes}"),
                        String::new(),
                        format!("{frac}"),
                        "1".into(),
                    ])?,
                }
            }
        }
    }
    if let Some(mut w) = csv_out {
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let cells = discover_cells(&args.dir)?;
    let (rows, missing) = aggregate(&args.dir, &cells)?;
    println!(
        "aggregated {} cells from {} ({} missing)",
        rows,
        args.dir.display(),
        missing
    );
    Ok(ExitCode::SUCCESS)
}
