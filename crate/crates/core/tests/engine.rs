use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use relaysim::metrics::{coverage_times, metrics_from_trace};
use relaysim::protocols::Transaction;
use relaysim::sim::{self, format_trace, sample_exponential, stream, Message, Outcome, RunInput, TraceEntry};
use relaysim::{AddrGossip, Behavior, Mode, NodeId, ProtocolParams, SeededRng, Topology, TxId, Workload};

fn diffusion(rate: f64) -> ProtocolParams {
    ProtocolParams {
        mode: Mode::Diffusion,
        diffusion_rate: rate,
        ..ProtocolParams::default()
    }
}

fn one_tx(origin: u32, at: f64) -> Workload {
    Workload {
        txs: vec![Transaction {
            txid: TxId(0),
            origin: NodeId(origin),
            created_at: at,
        }],
    }
}

fn go(topo: &Topology, params: ProtocolParams, wl: &Workload, seed: u64) -> relaysim::RunOutput {
    sim::run(RunInput {
        topology: topo,
        params,
        behavior: Behavior::LogOnly,
        workload: wl,
        addr: AddrGossip::default(),
        t_end: 1e6,
        seed,
        keep_trace: true,
    })
    .unwrap()
}

/// First time each node holds tx 0.
fn receipts(out: &relaysim::RunOutput, n: usize) -> Vec<Option<f64>> {
    let mut r = vec![None; n];
    for rec in out.trace.as_ref().unwrap() {
        let node = match &rec.entry {
            TraceEntry::Create { origin, .. } => *origin,
            TraceEntry::Deliver { delivery, .. } if delivery.msg.tx().is_some() => delivery.to,
            _ => continue,
        };
        r[node.idx()].get_or_insert(rec.time);
    }
    r
}

fn line() -> Topology {
    Topology::parse("node 0 R 0 honest\nnode 1 R 1 honest\nnode 2 R 2 honest\nlink 0 1 0.1\nlink 1 2 0.25\n").unwrap()
}

#[test]
fn empty_workload_is_quiescent_at_once() {
    let topo = line();
    let out = go(&topo, diffusion(1.0), &Workload { txs: vec![] }, 1);
    assert!(out.trace.unwrap().is_empty());
    assert_eq!(out.dispatched, 0);
    assert_eq!(out.end_time, 0.0);
    assert!(!out.non_quiescent);
}

#[test]
fn line_matches_hand_simulation() {
    let topo = line();
    for seed in 0..20 {
        let out = go(&topo, diffusion(0.5), &one_tx(0, 2.0), seed);
        // The only draws: node 0 announcing to 1, then node 1 announcing to 2.
        let mut rng = SeededRng::derive(seed, stream::PROTOCOL);
        let t1 = 2.0 + sample_exponential::<f64>(&mut rng, 0.5).unwrap() + 0.1;
        let t2 = t1 + sample_exponential::<f64>(&mut rng, 0.5).unwrap() + 0.25;
        let r = receipts(&out, 3);
        assert_eq!(r, vec![Some(2.0), Some(t1), Some(t2)]);
        assert!(r[0] < r[1] && r[1] < r[2]);
        // Thresholds for 3 honest nodes are 2, 3 and 3 nodes.
        let cov = coverage_times(out.trace.as_ref().unwrap(), &topo, TxId(0));
        assert_eq!((cov.t50, cov.t90, cov.t100), (Some(t1), Some(t2), Some(t2)));
        assert_eq!(out.metrics.aggregates.messages.announce, 2);
    }
}

#[test]
fn single_node_coverage_is_creation_time() {
    let topo = Topology::parse("node 0 R 0 honest\n").unwrap();
    let out = go(&topo, diffusion(1.0), &one_tx(0, 3.5), 4);
    let cov = coverage_times(out.trace.as_ref().unwrap(), &topo, TxId(0));
    assert_eq!((cov.t50, cov.t90, cov.t100), (Some(3.5), Some(3.5), Some(3.5)));
    assert_eq!(out.dispatched, 1);
}

#[test]
fn star_leaves_get_independent_delays() {
    let mut t = String::from("node 0 R 0 honest\n");
    for i in 1..=5 {
        t.push_str(&format!("node {i} U {i} honest\n"));
    }
    let lat = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3];
    for (i, l) in lat.iter().enumerate().skip(1) {
        t.push_str(&format!("link {i} 0 {l}\n"));
    }
    let topo = Topology::parse(&t).unwrap();
    let out = go(&topo, diffusion(2.0), &one_tx(0, 1.0), 9);
    let mut rng = SeededRng::derive(9, stream::PROTOCOL);
    let r = receipts(&out, 6);
    // Links are visited in file order.
    for i in 1..=5 {
        let want = 1.0 + sample_exponential::<f64>(&mut rng, 2.0).unwrap() + lat[i];
        assert_eq!(r[i], Some(want));
    }
}

#[test]
fn same_seed_same_trace_bytes() {
    let cfg = relaysim::ExperimentConfig {
        topology: relaysim::TopologyConfig {
            num_reachable: 8,
            num_unreachable: 40,
            u_outbound: 3,
            r_outbound: 3,
            ..Default::default()
        },
        workload: relaysim::WorkloadConfig {
            num_txs: 30,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = relaysim::experiment::simulate::<f64>(&cfg, 42, true).unwrap().1;
    let b = relaysim::experiment::simulate::<f64>(&cfg, 42, true).unwrap().1;
    assert_eq!(
        format_trace(a.trace.as_ref().unwrap()),
        format_trace(b.trace.as_ref().unwrap())
    );
    let c = relaysim::experiment::simulate::<f64>(&cfg, 43, true).unwrap().1;
    assert_ne!(
        format_trace(a.trace.as_ref().unwrap()),
        format_trace(c.trace.as_ref().unwrap())
    );
}

#[test]
fn isolated_node_sends_nothing() {
    let topo = Topology::parse("node 0 R 0 honest\nnode 1 R 1 honest\n").unwrap();
    let out = go(&topo, diffusion(1.0), &one_tx(0, 0.0), 1);
    assert_eq!(out.dispatched, 1);
    assert_eq!(out.metrics.aggregates.fully_covered, 0);
}

/// First-passage oracle: receipt time of each node is its shortest-path
/// distance when every directed edge costs Exp(rate) + latency.
fn oracle_full_coverage(n: usize, lat: &HashMap<(usize, usize), f64>, rate: f64, rng: &mut SeededRng) -> f64 {
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for (&(a, b), &l) in lat {
        w[a][b] = sample_exponential::<f64>(rng, rate).unwrap() + l;
        w[b][a] = sample_exponential::<f64>(rng, rate).unwrap() + l;
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[0] = 0.0;
    let mut heap = BinaryHeap::from([Reverse((0u64, 0usize))]);
    while let Some(Reverse((d, v))) = heap.pop() {
        let d = f64::from_bits(d);
        if d > dist[v] {
            continue;
        }
        for u in 0..n {
            let nd = d + w[v][u];
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((nd.to_bits(), u)));
            }
        }
    }
    dist.into_iter().fold(0.0, f64::max)
}

#[test]
fn complete_graph_matches_first_passage_oracle() {
    let mut t = String::new();
    let mut lat = HashMap::new();
    for i in 0..4 {
        t.push_str(&format!("node {i} R {i} honest\n"));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let l = 0.05 * (1 + i + j) as f64;
            lat.insert((i, j), l);
            t.push_str(&format!("link {i} {j} {l}\n"));
        }
    }
    let topo = Topology::parse(&t).unwrap();
    let runs = 4000;
    let mut sim_times = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let out = go(&topo, diffusion(1.0), &one_tx(0, 0.0), seed);
        sim_times.push(out.metrics.txs[0].t100.expect("full coverage"));
    }
    let mut rng = SeededRng::new(0xfeed);
    let oracle: Vec<f64> = (0..runs)
        .map(|_| oracle_full_coverage(4, &lat, 1.0, &mut rng))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ms, mo) = (mean(&sim_times), mean(&oracle));
    let se = ((var(&sim_times, ms) + var(&oracle, mo)) / runs as f64).sqrt();
    assert!((ms - mo).abs() < 4.0 * se, "sim {ms} oracle {mo} se {se}");
}

#[test]
fn replayed_trace_gives_same_metrics() {
    let cfg = relaysim::ExperimentConfig {
        topology: relaysim::TopologyConfig {
            num_reachable: 12,
            num_unreachable: 80,
            u_outbound: 4,
            r_outbound: 4,
            ..Default::default()
        },
        adversary: relaysim::AdversaryConfig {
            enabled: true,
            num_adv_u: 5,
            ..Default::default()
        },
        workload: relaysim::WorkloadConfig {
            num_txs: 60,
            ..Default::default()
        },
        ..Default::default()
    };
    for mode in [Mode::Proxy, Mode::Diffusion] {
        let mut c = cfg.clone();
        c.protocol.mode = mode;
        c.addr.enabled = true;
        let (topo, out) = relaysim::experiment::simulate::<f64>(&c, 5, true).unwrap();
        let trace = out.trace.as_ref().unwrap();
        let text = format_trace(trace);
        let parsed = sim::parse_trace::<f64>(&text).unwrap();
        let (m, obs) = metrics_from_trace(&parsed, &topo, out.end_time, out.non_quiescent);
        assert_eq!(m, out.metrics);
        assert_eq!(obs, out.observations);
        let a = &m.aggregates;
        let kinds = a.messages.announce + a.messages.proxy_push + a.messages.addr;
        assert_eq!(kinds, a.messages.deliveries);
        let delivered = trace
            .iter()
            .filter(|r| matches!(r.entry, TraceEntry::Deliver { .. }))
            .count() as u64;
        assert_eq!(delivered, a.messages.deliveries);
        if mode == Mode::Diffusion {
            assert_eq!(a.messages.proxy_push, 0);
            assert!(m.txs.iter().all(|t| t.proxy_hops.unwrap_or(0) == 0));
        } else {
            // Every proxied creation starts with a push, never an announcement.
            for rec in trace {
                if let TraceEntry::Create {
                    tx,
                    origin,
                    outcome: Outcome::Proxied,
                } = rec.entry
                {
                    let first = trace.iter().find_map(|r| match &r.entry {
                        TraceEntry::Deliver { delivery, .. }
                            if delivery.from == origin && delivery.msg.tx() == Some(tx) =>
                        {
                            Some(delivery.msg)
                        }
                        _ => None,
                    });
                    assert!(matches!(first, Some(Message::ProxyPush { .. })));
                }
            }
        }
    }
}
