#![allow(dead_code)]

use std::collections::BTreeMap;

use relaysim::{ExperimentConfig, Mode, TopologyConfig, WorkloadConfig};

/// Minimum-time scan over raw CSV text, first row wins ties.
/// Returns txid -> (accused node, time).
pub fn brute_force_first_spy(csv_text: &str) -> BTreeMap<u64, (u32, f64)> {
    let mut lines = csv_text.lines();
    assert_eq!(lines.next(), Some("txid,observed_at,from_node,msg_kind"));
    let mut best: BTreeMap<u64, (u32, f64)> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 4, "{line}");
        let tx: u64 = f[0].parse().unwrap();
        let t: f64 = f[1].parse().unwrap();
        let node: u32 = f[2].parse().unwrap();
        match best.get(&tx) {
            Some(&(_, cur)) if cur <= t => {}
            _ => {
                best.insert(tx, (node, t));
            }
        }
    }
    best
}

pub fn small(r: usize, u: usize, u_out: usize, r_out: usize, txs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        topology: TopologyConfig {
            num_reachable: r,
            num_unreachable: u,
            u_outbound: u_out,
            r_outbound: r_out,
            ..Default::default()
        },
        workload: WorkloadConfig {
            num_txs: txs,
            ..Default::default()
        },
        ..Default::default()
    };
    c.protocol.mode = Mode::Proxy;
    c.run.t_end = 1e6;
    c
}
