//! Single runs and parameter sweeps with managed seeds and report files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::metrics::RunMetrics;
use crate::net::{build_topology, deploy_adversary, NetError, Topology};
use crate::protocols::Mode;
use crate::scalar::Real;
use crate::sim::{self, format_trace, stream, RunInput, RunOutput, SeededRng, SimError};
use crate::workload::Workload;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("topology error: {0}")]
    Net(#[from] NetError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("workload error: {0}")]
    Workload(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed report: {msg}")]
    Report { path: PathBuf, msg: String },
}

impl ExperimentError {
    /// Process exit code: 1 for configuration problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Io { .. } | ExperimentError::Report { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// The swept parameters of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub mode: Mode,
    pub p: f64,
    pub u_outbound: usize,
    pub num_spy_r: usize,
}

impl ParamPoint {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        ParamPoint {
            mode: cfg.protocol.mode,
            p: cfg.protocol.p,
            u_outbound: cfg.topology.u_outbound,
            num_spy_r: cfg.adversary.num_spy_r,
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.protocol.mode = self.mode;
        c.protocol.p = self.p;
        c.topology.u_outbound = self.u_outbound;
        c.adversary.num_spy_r = self.num_spy_r;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub point: ParamPoint,
    pub replica: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub metrics: Option<RunMetrics>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Topology (adversary included) and workload for one seed. Topology,
/// adversary placement, workload and protocol draws use separate streams, so
/// runs that differ only in protocol settings share the same network and
/// transactions.
pub fn build_scenario<T: Real>(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Topology<T>, Workload<T>), ExperimentError> {
    let honest: Topology<T> = build_topology(&cfg.topology, &mut SeededRng::derive(seed, stream::TOPOLOGY))?;
    let topology = deploy_adversary(
        &honest,
        &cfg.topology,
        &cfg.adversary,
        &mut SeededRng::derive(seed, stream::ADVERSARY),
    )?;
    let workload = Workload::generate(&cfg.workload, &topology, &mut SeededRng::derive(seed, stream::WORKLOAD))
        .map_err(ExperimentError::Workload)?;
    Ok((topology, workload))
}

fn cast_params<T: Real>(cfg: &ExperimentConfig) -> crate::protocols::ProtocolParams<T> {
    let p = &cfg.protocol;
    crate::protocols::ProtocolParams {
        mode: p.mode,
        p: T::lit(p.p),
        timeout: T::lit(p.timeout),
        epoch_len: T::lit(p.epoch_len),
        proxy_set_size: p.proxy_set_size,
        activation_min_buckets: p.activation_min_buckets,
        diffusion_rate: T::lit(p.diffusion_rate),
        max_retries: p.max_retries,
    }
}

/// Builds the scenario for `seed` and simulates it.
pub fn simulate<T: Real>(
    cfg: &ExperimentConfig,
    seed: u64,
    keep_trace: bool,
) -> Result<(Topology<T>, RunOutput<T>), ExperimentError> {
    cfg.validate()?;
    let (topology, workload) = build_scenario::<T>(cfg, seed)?;
    let out = sim::run(RunInput {
        topology: &topology,
        params: cast_params(cfg),
        behavior: cfg.adversary.behavior,
        workload: &workload,
        addr: sim::AddrGossip {
            enabled: cfg.addr.enabled,
            advertise_unreachable: cfg.addr.advertise_unreachable,
            interval: T::lit(cfg.addr.interval),
            rounds: cfg.addr.rounds,
        },
        t_end: T::lit(cfg.run.t_end),
        seed,
        keep_trace,
    })?;
    Ok((topology, out))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: Option<bool>,
    pub jobs: Option<usize>,
}

impl RunOptions {
    fn resolve(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        if let Some(s) = self.seed {
            c.run.seed = s;
        }
        if let Some(o) = &self.out {
            c.run.out_dir = o.clone();
        }
        if let Some(t) = self.trace {
            c.run.trace = t;
        }
        if let Some(j) = self.jobs {
            c.run.jobs = j;
        }
        c
    }
}

/// Runs one simulation and writes `report.json`, `observations.csv`,
/// `topology.txt` and, with tracing on, `trace.txt` into the output directory.
pub fn run_single(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, ExperimentError> {
    let cfg = opts.resolve(cfg);
    cfg.validate()?;
    let (topology, out) = simulate::<f64>(&cfg, cfg.run.seed, cfg.run.trace)?;
    let dir = &cfg.run.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report = RunReport {
        point: ParamPoint::of(&cfg),
        replica: 0,
        seed: cfg.run.seed,
        error: None,
        metrics: Some(out.metrics),
    };
    let mut written = Vec::new();
    let mut emit = |name: &str, body: &str| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        write_file(&path, body)?;
        written.push(path);
        Ok(())
    };
    emit("report.json", &report.to_json())?;
    emit("observations.csv", &out.observations.to_csv())?;
    emit("topology.txt", &topology.to_text())?;
    if let Some(trace) = &out.trace {
        emit("trace.txt", &format_trace(trace))?;
    }
    Ok(written)
}

/// Cartesian product of the sweep axes, each axis sorted ascending. Axes left
/// empty take the base config's value.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<ParamPoint> {
    let base = ParamPoint::of(cfg);
    let mut modes = if cfg.sweep.mode.is_empty() {
        vec![base.mode]
    } else {
        cfg.sweep.mode.clone()
    };
    let mut ps = if cfg.sweep.p.is_empty() {
        vec![base.p]
    } else {
        cfg.sweep.p.clone()
    };
    let mut us = if cfg.sweep.u_outbound.is_empty() {
        vec![base.u_outbound]
    } else {
        cfg.sweep.u_outbound.clone()
    };
    let mut ss = if cfg.sweep.num_spy_r.is_empty() {
        vec![base.num_spy_r]
    } else {
        cfg.sweep.num_spy_r.clone()
    };
    modes.sort();
    modes.dedup();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    us.sort();
    us.dedup();
    ss.sort();
    ss.dedup();
    let mut out = Vec::new();
    for &mode in &modes {
        for &p in &ps {
            for &u_outbound in &us {
                for &num_spy_r in &ss {
                    out.push(ParamPoint {
                        mode,
                        p,
                        u_outbound,
                        num_spy_r,
                    });
                }
            }
        }
    }
    out
}

pub const CSV_HEADER: [&str; 10] = [
    "run",
    "cell",
    "replica",
    "seed",
    "mode",
    "p",
    "u_outbound",
    "num_spy_r",
    "metric",
    "value",
];

/// Scalar metrics emitted per run in the long-format CSV.
pub fn metric_rows(m: &RunMetrics) -> Vec<(&'static str, Option<f64>)> {
    let a = &m.aggregates;
    let n = |x: u64| Some(x as f64);
    vec![
        ("created", n(a.scores.created)),
        ("observed", n(a.observed)),
        ("first_spy_accuracy", a.first_spy_accuracy),
        ("precision", a.scores.precision),
        ("recall", a.scores.recall),
        ("accused_reachable", n(a.accusations_reachable)),
        ("accused_unreachable", n(a.accusations_unreachable)),
        ("mean_hops", a.mean_hops),
        ("median_hops", a.median_hops),
        ("median_t50", a.t50_latency.median),
        ("median_t90", a.t90_latency.median),
        ("p90_t90", a.t90_latency.p90),
        ("median_t100", a.t100_latency.median),
        ("fully_covered", n(a.fully_covered)),
        ("announce_msgs", n(a.messages.announce)),
        ("proxy_msgs", n(a.messages.proxy_push)),
        ("addr_msgs", n(a.messages.addr)),
        ("addr_originated_r", n(a.addr.originated_reachable)),
        ("addr_originated_u", n(a.addr.originated_unreachable)),
        ("retries", n(a.retries)),
        ("violations", n(a.violations)),
        ("fallbacks", n(a.fallbacks)),
        ("retained", n(a.retained)),
        ("capped", n(a.capped)),
        ("concealment_eligible", n(a.concealment_eligible)),
        ("concealment_violations", n(a.concealment_violations)),
        ("non_quiescent", Some(if a.non_quiescent { 1.0 } else { 0.0 })),
    ]
}

fn write_rows<W: io::Write>(w: &mut csv::Writer<W>, run: usize, cell: usize, report: &RunReport) -> csv::Result<()> {
    let pt = &report.point;
    let prefix = [
        run.to_string(),
        cell.to_string(),
        report.replica.to_string(),
        report.seed.to_string(),
        pt.mode.token().to_string(),
        pt.p.to_string(),
        pt.u_outbound.to_string(),
        pt.num_spy_r.to_string(),
    ];
    let mut row = |metric: &str, value: String| {
        let mut rec: Vec<String> = prefix.to_vec();
        rec.push(metric.to_string());
        rec.push(value);
        w.write_record(&rec)
    };
    match (&report.metrics, &report.error) {
        (Some(m), _) => {
            for (name, v) in metric_rows(m) {
                row(name, v.map(|x| x.to_string()).unwrap_or_default())?;
            }
        }
        (None, err) => row("error", err.clone().unwrap_or_default())?,
    }
    Ok(())
}

/// Long-format CSV of reports listed in run order (cell-major, then replica).
pub fn aggregate_csv(reports: &[RunReport], replicas: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (run, r) in reports.iter().enumerate() {
        write_rows(&mut w, run, run / replicas.max(1), r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    pub csv: String,
    pub csv_path: PathBuf,
    pub failures: usize,
}

fn report_name(cell: usize, replica: usize) -> String {
    format!("cell{cell:04}_rep{replica:04}.json")
}

/// Runs every sweep cell for every replica. Replica `r` uses seed
/// `run.seed + r` in every cell. A failing cell is recorded and the sweep
/// carries on.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepOutcome, ExperimentError> {
    let cfg = opts.resolve(cfg);
    cfg.validate()?;
    if cfg.sweep.is_empty() {
        return Err(ConfigError::general("sweep needs at least one non-empty axis").into());
    }
    let points = sweep_points(&cfg);
    let replicas = cfg.run.replicas;
    let jobs: Vec<(usize, usize, ParamPoint)> = points
        .iter()
        .enumerate()
        .flat_map(|(c, pt)| (0..replicas).map(move |r| (c, r, pt.clone())))
        .collect();

    let run_one = |(_, replica, point): &(usize, usize, ParamPoint)| {
        let seed = cfg.run.seed.wrapping_add(*replica as u64);
        let cell_cfg = point.apply(&cfg);
        match simulate::<f64>(&cell_cfg, seed, false) {
            Ok((_, out)) => RunReport {
                point: point.clone(),
                replica: *replica,
                seed,
                error: None,
                metrics: Some(out.metrics),
            },
            Err(e) => RunReport {
                point: point.clone(),
                replica: *replica,
                seed,
                error: Some(e.to_string()),
                metrics: None,
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.jobs)
        .build()
        .expect("thread pool");
    // collect() keeps input order whatever the completion order.
    let reports: Vec<RunReport> = pool.install(|| jobs.par_iter().map(run_one).collect());

    let dir = &cfg.run.out_dir;
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    for ((cell, replica, _), report) in jobs.iter().zip(&reports) {
        write_file(&runs_dir.join(report_name(*cell, *replica)), &report.to_json())?;
    }
    let csv = aggregate_csv(&reports, replicas);
    let csv_path = dir.join("sweep.csv");
    write_file(&csv_path, &csv)?;
    let failures = reports.iter().filter(|r| r.error.is_some()).count();
    Ok(SweepOutcome {
        reports,
        csv,
        csv_path,
        failures,
    })
}

/// Rebuilds the sweep CSV from the per-run reports under `dir/runs`.
pub fn reaggregate(dir: &Path) -> Result<String, ExperimentError> {
    let runs_dir = dir.join("runs");
    let mut names: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(io_err(&runs_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut reports = Vec::with_capacity(names.len());
    let mut replicas = 0;
    for path in &names {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let r: RunReport = serde_json::from_str(&text).map_err(|e| ExperimentError::Report {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        replicas = replicas.max(r.replica + 1);
        reports.push(r);
    }
    Ok(aggregate_csv(&reports, replicas))
}
