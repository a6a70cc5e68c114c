//! Experiment configuration: flat `section.key = value` lines.
//!
//! `[section]` headers are also accepted, after which bare `key = value`
//! lines belong to that section. `#` starts a comment. Every key has a
//! default; unknown or repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adversary::{AdversaryConfig, Behavior};
use crate::net::{NodeId, TopologyConfig};
use crate::protocols::{Mode, ProtocolParams};
use crate::sim::AddrGossip;
use crate::workload::{OriginPool, WorkloadConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn general(msg: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.msg),
            None => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub replicas: usize,
    pub t_end: f64,
    pub out_dir: PathBuf,
    pub trace: bool,
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            replicas: 1,
            t_end: 3600.0,
            out_dir: PathBuf::from("out"),
            trace: false,
            jobs: 1,
        }
    }
}

/// Sweep axes; an empty axis means "use the base config value".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSection {
    pub p: Vec<f64>,
    pub u_outbound: Vec<usize>,
    pub num_spy_r: Vec<usize>,
    pub mode: Vec<Mode>,
}

impl SweepSection {
    pub fn is_empty(&self) -> bool {
        self.p.is_empty() && self.u_outbound.is_empty() && self.num_spy_r.is_empty() && self.mode.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub protocol: ProtocolParams<f64>,
    pub adversary: AdversaryConfig,
    pub workload: WorkloadConfig,
    pub addr: AddrGossip<f64>,
    pub run: RunSection,
    pub sweep: SweepSection,
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "topology.num_r",
    "topology.num_u",
    "topology.u_outbound",
    "topology.r_outbound",
    "topology.num_buckets",
    "topology.max_connections",
    "topology.latency_min",
    "topology.latency_max",
    "protocol.mode",
    "protocol.p",
    "protocol.timeout",
    "protocol.epoch_len",
    "protocol.proxy_set_size",
    "protocol.activation_min_buckets",
    "protocol.diffusion_rate",
    "protocol.max_retries",
    "adversary.enabled",
    "adversary.num_spy_r",
    "adversary.num_adv_u",
    "adversary.connections_per_r",
    "adversary.behavior",
    "adversary.bucket_span",
    "adversary.target_node",
    "workload.num_txs",
    "workload.creation_rate",
    "workload.origins",
    "addr.enabled",
    "addr.advertise_unreachable",
    "addr.interval",
    "addr.rounds",
    "run.seed",
    "run.replicas",
    "run.t_end",
    "run.out_dir",
    "run.trace",
    "run.jobs",
    "sweep.p",
    "sweep.u_outbound",
    "sweep.num_spy_r",
    "sweep.mode",
];

fn value<V: FromStr>(raw: &str) -> Result<V, String> {
    raw.parse().map_err(|_| format!("invalid value `{raw}`"))
}

fn flag(raw: &str) -> Result<bool, String> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{raw}`")),
    }
}

fn list<V: FromStr>(raw: &str) -> Result<Vec<V>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("invalid list element `{s}`")))
        .collect()
}

fn behavior(raw: &str) -> Result<Behavior, String> {
    match raw {
        "log_only" => Ok(Behavior::LogOnly),
        "retain_proxied" => Ok(Behavior::RetainProxied),
        _ => Err(format!(
            "unknown behavior `{raw}` (expected log_only or retain_proxied)"
        )),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let Some((key, val)) = line.split_once('=') else {
                return Err(ConfigError::at(
                    line_no,
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim();
            let full = match &section {
                Some(s) if !key.contains('.') => format!("{s}.{key}"),
                _ => key.to_string(),
            };
            if !KEYS.contains(&full.as_str()) {
                return Err(ConfigError::at(line_no, format!("unknown key `{full}`")));
            }
            if !seen.insert(full.clone()) {
                return Err(ConfigError::at(line_no, format!("duplicate key `{full}`")));
            }
            cfg.set(&full, val.trim())
                .map_err(|m| ConfigError::at(line_no, format!("{full}: {m}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let t = &mut self.topology;
        let p = &mut self.protocol;
        let a = &mut self.adversary;
        match key {
            "topology.num_r" => t.num_reachable = value(v)?,
            "topology.num_u" => t.num_unreachable = value(v)?,
            "topology.u_outbound" => t.u_outbound = value(v)?,
            "topology.r_outbound" => t.r_outbound = value(v)?,
            "topology.num_buckets" => t.num_buckets = value(v)?,
            "topology.max_connections" => t.max_connections = value(v)?,
            "topology.latency_min" => t.latency_min = value(v)?,
            "topology.latency_max" => t.latency_max = value(v)?,
            "protocol.mode" => p.mode = v.parse()?,
            "protocol.p" => p.p = value(v)?,
            "protocol.timeout" => p.timeout = value(v)?,
            "protocol.epoch_len" => p.epoch_len = value(v)?,
            "protocol.proxy_set_size" => p.proxy_set_size = value(v)?,
            "protocol.activation_min_buckets" => p.activation_min_buckets = value(v)?,
            "protocol.diffusion_rate" => p.diffusion_rate = value(v)?,
            "protocol.max_retries" => p.max_retries = value(v)?,
            "adversary.enabled" => a.enabled = flag(v)?,
            "adversary.num_spy_r" => a.num_spy_r = value(v)?,
            "adversary.num_adv_u" => a.num_adv_u = value(v)?,
            "adversary.connections_per_r" => a.connections_per_honest_r = value(v)?,
            "adversary.behavior" => a.behavior = behavior(v)?,
            "adversary.bucket_span" => a.bucket_span = value(v)?,
            "adversary.target_node" => a.target_node = if v == "none" { None } else { Some(NodeId(value(v)?)) },
            "workload.num_txs" => self.workload.num_txs = value(v)?,
            "workload.creation_rate" => self.workload.creation_rate = value(v)?,
            "workload.origins" => self.workload.origins = v.parse::<OriginPool>()?,
            "addr.enabled" => self.addr.enabled = flag(v)?,
            "addr.advertise_unreachable" => self.addr.advertise_unreachable = flag(v)?,
            "addr.interval" => self.addr.interval = value(v)?,
            "addr.rounds" => self.addr.rounds = value(v)?,
            "run.seed" => self.run.seed = value(v)?,
            "run.replicas" => self.run.replicas = value(v)?,
            "run.t_end" => self.run.t_end = value(v)?,
            "run.out_dir" => self.run.out_dir = PathBuf::from(v),
            "run.trace" => self.run.trace = flag(v)?,
            "run.jobs" => self.run.jobs = value(v)?,
            "sweep.p" => self.sweep.p = list(v)?,
            "sweep.u_outbound" => self.sweep.u_outbound = list(v)?,
            "sweep.num_spy_r" => self.sweep.num_spy_r = list(v)?,
            "sweep.mode" => self.sweep.mode = list(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Semantic checks that do not need a random draw.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology
            .validate()
            .map_err(|e| ConfigError::general(e.to_string()))?;
        self.protocol.validate().map_err(ConfigError::general)?;
        self.adversary.validate().map_err(ConfigError::general)?;
        if self.run.replicas == 0 {
            return Err(ConfigError::general("run.replicas must be at least 1"));
        }
        if self.run.jobs == 0 {
            return Err(ConfigError::general("run.jobs must be at least 1"));
        }
        if !(self.run.t_end >= 0.0) {
            return Err(ConfigError::general("run.t_end must be non-negative"));
        }
        if self.workload.num_txs > 0 && !(self.workload.creation_rate > 0.0) {
            return Err(ConfigError::general("workload.creation_rate must be positive"));
        }
        if self.addr.enabled && !(self.addr.interval > 0.0) {
            return Err(ConfigError::general("addr.interval must be positive"));
        }
        for &p in &self.sweep.p {
            if !(0.0..1.0).contains(&p) {
                return Err(ConfigError::general(format!("sweep.p value {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Canonical text form listing every key.
    pub fn to_text(&self) -> String {
        fn join<V: fmt::Display>(v: &[V]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let t = &self.topology;
        let p = &self.protocol;
        let a = &self.adversary;
        let mut lines = vec![
            format!("topology.num_r = {}", t.num_reachable),
            format!("topology.num_u = {}", t.num_unreachable),
            format!("topology.u_outbound = {}", t.u_outbound),
            format!("topology.r_outbound = {}", t.r_outbound),
            format!("topology.num_buckets = {}", t.num_buckets),
            format!("topology.max_connections = {}", t.max_connections),
            format!("topology.latency_min = {}", t.latency_min),
            format!("topology.latency_max = {}", t.latency_max),
            format!("protocol.mode = {}", p.mode.token()),
            format!("protocol.p = {}", p.p),
            format!("protocol.timeout = {}", p.timeout),
            format!("protocol.epoch_len = {}", p.epoch_len),
            format!("protocol.proxy_set_size = {}", p.proxy_set_size),
            format!("protocol.activation_min_buckets = {}", p.activation_min_buckets),
            format!("protocol.diffusion_rate = {}", p.diffusion_rate),
            format!("protocol.max_retries = {}", p.max_retries),
            format!("adversary.enabled = {}", a.enabled),
            format!("adversary.num_spy_r = {}", a.num_spy_r),
            format!("adversary.num_adv_u = {}", a.num_adv_u),
            format!("adversary.connections_per_r = {}", a.connections_per_honest_r),
            format!(
                "adversary.behavior = {}",
                match a.behavior {
                    Behavior::LogOnly => "log_only",
                    Behavior::RetainProxied => "retain_proxied",
                }
            ),
            format!("adversary.bucket_span = {}", a.bucket_span),
            format!(
                "adversary.target_node = {}",
                a.target_node.map_or("none".to_string(), |n| n.to_string())
            ),
            format!("workload.num_txs = {}", self.workload.num_txs),
            format!("workload.creation_rate = {}", self.workload.creation_rate),
            format!("workload.origins = {}", self.workload.origins.token()),
            format!("addr.enabled = {}", self.addr.enabled),
            format!("addr.advertise_unreachable = {}", self.addr.advertise_unreachable),
            format!("addr.interval = {}", self.addr.interval),
            format!("addr.rounds = {}", self.addr.rounds),
            format!("run.seed = {}", self.run.seed),
            format!("run.replicas = {}", self.run.replicas),
            format!("run.t_end = {}", self.run.t_end),
            format!("run.out_dir = {}", self.run.out_dir.display()),
            format!("run.trace = {}", self.run.trace),
            format!("run.jobs = {}", self.run.jobs),
        ];
        let s = &self.sweep;
        let modes: Vec<&str> = s.mode.iter().map(|m| m.token()).collect();
        lines.push(format!("sweep.p = {}", join(&s.p)));
        lines.push(format!("sweep.u_outbound = {}", join(&s.u_outbound)));
        lines.push(format!("sweep.num_spy_r = {}", join(&s.num_spy_r)));
        lines.push(format!("sweep.mode = {}", modes.join(", ")));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
