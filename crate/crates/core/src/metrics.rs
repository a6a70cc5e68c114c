//! Anonymity, latency and traffic metrics.
//!
//! Everything here is computed from trace records alone (plus the topology
//! for node roles), so a report can be recomputed offline from an exported
//! trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversary::{first_spy_estimate, FirstSpyReport, ObservationLog};
use crate::net::{NodeId, Reachability, Topology};
use crate::protocols::TxId;
use crate::scalar::Real;
use crate::sim::{Message, Outcome, TraceEntry, TraceRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub created: u64,
    pub accusations: u64,
    pub correct: u64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Scores first-spy accusations against the true origins. Accusations for
/// transactions outside `ground_truth` are ignored.
pub fn score<T: Real>(report: &FirstSpyReport<T>, ground_truth: &BTreeMap<TxId, NodeId>) -> Scores {
    let mut accusations = 0u64;
    let mut correct = 0u64;
    for (tx, origin) in ground_truth {
        if let Some(a) = report.accusations.get(tx) {
            accusations += 1;
            if a.node == *origin {
                correct += 1;
            }
        }
    }
    let created = ground_truth.len() as u64;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Scores {
        created,
        accusations,
        correct,
        accuracy: ratio(correct, created),
        precision: ratio(correct, accusations),
        recall: ratio(correct, created),
    }
}

/// Absolute times at which 50%, 90% and 100% of honest nodes hold a transaction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coverage<T> {
    pub t50: Option<T>,
    pub t90: Option<T>,
    pub t100: Option<T>,
}

fn thresholds(honest: usize) -> [usize; 3] {
    [
        (honest * 50).div_ceil(100).max(1),
        (honest * 90).div_ceil(100).max(1),
        honest.max(1),
    ]
}

struct CoverageTracker<T> {
    seen: Vec<bool>,
    honest_seen: usize,
    reached: [Option<T>; 3],
}

impl<T: Real> CoverageTracker<T> {
    fn new(n: usize) -> Self {
        CoverageTracker {
            seen: vec![false; n],
            honest_seen: 0,
            reached: [None; 3],
        }
    }

    /// Marks `node` as holding the tx at `time`; returns true on first receipt.
    fn mark(&mut self, topo: &Topology<T>, limits: &[usize; 3], node: NodeId, time: T) -> bool {
        let slot = &mut self.seen[node.idx()];
        if *slot {
            return false;
        }
        *slot = true;
        if topo.nodes[node.idx()].is_honest() {
            self.honest_seen += 1;
            for (r, &lim) in self.reached.iter_mut().zip(limits) {
                if r.is_none() && self.honest_seen >= lim {
                    *r = Some(time);
                }
            }
        }
        true
    }

    fn coverage(&self) -> Coverage<T> {
        Coverage {
            t50: self.reached[0],
            t90: self.reached[1],
            t100: self.reached[2],
        }
    }
}

/// Coverage times of one transaction, scanned from a complete trace.
pub fn coverage_times<T: Real>(trace: &[TraceRecord<T>], topology: &Topology<T>, txid: TxId) -> Coverage<T> {
    let limits = thresholds(topology.honest_count());
    let mut cov = CoverageTracker::new(topology.nodes.len());
    for rec in trace {
        match &rec.entry {
            TraceEntry::Create { tx, origin, .. } if *tx == txid => {
                cov.mark(topology, &limits, *origin, rec.time);
            }
            TraceEntry::Deliver { delivery, .. } if delivery.msg.tx() == Some(txid) => {
                cov.mark(topology, &limits, delivery.to, rec.time);
            }
            _ => {}
        }
    }
    cov.coverage()
}

/// Address-gossip volume, split by the reachability of the advertised node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrTraffic {
    /// Self-address announcements originated.
    pub originated_reachable: u64,
    pub originated_unreachable: u64,
    /// Messages sent by the originator.
    pub first_hop_reachable: u64,
    pub first_hop_unreachable: u64,
    /// Messages forwarded by first-hop receivers.
    pub relayed_reachable: u64,
    pub relayed_unreachable: u64,
}

impl AddrTraffic {
    pub fn originated(&self) -> u64 {
        self.originated_reachable + self.originated_unreachable
    }

    pub fn messages(&self) -> u64 {
        self.first_hop_reachable + self.first_hop_unreachable + self.relayed_reachable + self.relayed_unreachable
    }

    fn tally<T: Real>(&mut self, topo: &Topology<T>, entry: &TraceEntry<T>) {
        let unreachable = |n: NodeId| topo.nodes[n.idx()].reachability == Reachability::Unreachable;
        match entry {
            TraceEntry::AddrOrigin { node } => {
                if unreachable(*node) {
                    self.originated_unreachable += 1;
                } else {
                    self.originated_reachable += 1;
                }
            }
            TraceEntry::Deliver { delivery, .. } => {
                if let Message::Addr { origin, relayed } = delivery.msg {
                    let slot = match (relayed, unreachable(origin)) {
                        (false, false) => &mut self.first_hop_reachable,
                        (false, true) => &mut self.first_hop_unreachable,
                        (true, false) => &mut self.relayed_reachable,
                        (true, true) => &mut self.relayed_unreachable,
                    };
                    *slot += 1;
                }
            }
            _ => {}
        }
    }
}

pub fn addr_traffic<T: Real>(trace: &[TraceRecord<T>], topology: &Topology<T>) -> AddrTraffic {
    let mut a = AddrTraffic::default();
    for rec in trace {
        a.tally(topology, &rec.entry);
    }
    a
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub p90: Option<f64>,
    pub max: Option<f64>,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

impl LatencySummary {
    pub fn of(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let count = values.len() as u64;
        LatencySummary {
            count,
            mean: (count > 0).then(|| values.iter().sum::<f64>() / count as f64),
            median: quantile(&values, 0.5),
            p90: quantile(&values, 0.9),
            max: values.last().copied(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub announce: u64,
    pub proxy_push: u64,
    pub addr: u64,
    pub deliveries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxMetrics {
    pub txid: TxId,
    pub origin: NodeId,
    pub origin_class: String,
    pub accused: Option<NodeId>,
    pub correct: bool,
    /// Pushes that reached a node not yet holding the transaction before the
    /// first diffusion decision, i.e. the number of continue-or-diffuse coin
    /// flips it took. Absent if it never started diffusing.
    pub proxy_hops: Option<u32>,
    pub create_time: f64,
    pub t50: Option<f64>,
    pub t90: Option<f64>,
    pub t100: Option<f64>,
    pub retries: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub scores: Scores,
    pub first_spy_accuracy: Option<f64>,
    pub observed: u64,
    pub accusations_reachable: u64,
    pub accusations_unreachable: u64,
    pub mean_hops: Option<f64>,
    pub median_hops: Option<f64>,
    /// Coverage latencies relative to creation.
    pub t50_latency: LatencySummary,
    pub t90_latency: LatencySummary,
    pub t100_latency: LatencySummary,
    pub fully_covered: u64,
    pub messages: MessageCounts,
    pub addr: AddrTraffic,
    pub duplicates: u64,
    pub violations: u64,
    pub retries: u64,
    pub capped: u64,
    pub fallbacks: u64,
    pub retained: u64,
    /// Proxied transactions whose origin had no adversarial proxy at creation.
    pub concealment_eligible: u64,
    /// Of those, transactions the adversary first heard from the origin
    /// before anyone else announced them.
    pub concealment_violations: u64,
    pub non_quiescent: bool,
    pub end_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub aggregates: Aggregates,
    pub txs: Vec<TxMetrics>,
}

struct TxTrack<T> {
    origin: NodeId,
    created: T,
    create_outcome: Outcome,
    coverage: CoverageTracker<T>,
    /// Pushes that reached a new holder before anyone started diffusing.
    pushes: u32,
    diffusing: bool,
    /// Earliest announcement sent by anyone but the origin.
    first_foreign_announce: Option<T>,
    proxy_set_clean: bool,
    retries: u32,
}

/// Streaming consumer of trace records.
pub struct MetricsCollector<'a, T: Real> {
    topo: &'a Topology<T>,
    limits: [usize; 3],
    txs: BTreeMap<TxId, TxTrack<T>>,
    proxy_sets: Vec<Vec<NodeId>>,
    messages: MessageCounts,
    addr: AddrTraffic,
    observations: ObservationLog<T>,
    duplicates: u64,
    violations: u64,
    retries: u64,
    capped: u64,
    fallbacks: u64,
    retained: u64,
}

impl<'a, T: Real> MetricsCollector<'a, T> {
    pub fn new(topo: &'a Topology<T>) -> Self {
        MetricsCollector {
            topo,
            limits: thresholds(topo.honest_count()),
            txs: BTreeMap::new(),
            proxy_sets: vec![Vec::new(); topo.nodes.len()],
            messages: MessageCounts::default(),
            addr: AddrTraffic::default(),
            observations: ObservationLog::new(),
            duplicates: 0,
            violations: 0,
            retries: 0,
            capped: 0,
            fallbacks: 0,
            retained: 0,
        }
    }

    fn count_outcome(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Duplicate => self.duplicates += 1,
            Outcome::Violation => self.violations += 1,
            Outcome::Retried => self.retries += 1,
            Outcome::Capped => self.capped += 1,
            Outcome::Fallback => self.fallbacks += 1,
            Outcome::Retained => self.retained += 1,
            _ => {}
        }
    }

    pub fn observe(&mut self, rec: &TraceRecord<T>) {
        let topo = self.topo;
        match &rec.entry {
            TraceEntry::Create { tx, origin, outcome } => {
                self.count_outcome(*outcome);
                let mut coverage = CoverageTracker::new(topo.nodes.len());
                coverage.mark(topo, &self.limits, *origin, rec.time);
                let proxy_set_clean = self.proxy_sets[origin.idx()]
                    .iter()
                    .all(|p| topo.nodes[p.idx()].is_honest());
                self.txs.insert(
                    *tx,
                    TxTrack {
                        origin: *origin,
                        created: rec.time,
                        create_outcome: *outcome,
                        coverage,
                        pushes: 0,
                        diffusing: outcome.starts_diffusion(),
                        first_foreign_announce: None,
                        proxy_set_clean,
                        retries: 0,
                    },
                );
            }
            TraceEntry::Deliver { delivery: d, outcome } => {
                self.count_outcome(*outcome);
                self.messages.deliveries += 1;
                match d.msg {
                    Message::Announce { .. } => self.messages.announce += 1,
                    Message::ProxyPush { .. } => self.messages.proxy_push += 1,
                    Message::Addr { .. } => {
                        self.messages.addr += 1;
                        self.addr.tally(topo, &rec.entry);
                        return;
                    }
                }
                self.observations.record(topo, rec.time, rec.seq, d);
                let tx = d.msg.tx().expect("transaction message");
                let Some(track) = self.txs.get_mut(&tx) else {
                    return;
                };
                let first = track.coverage.mark(topo, &self.limits, d.to, rec.time);
                match d.msg {
                    Message::ProxyPush { .. } => {
                        if first && !track.diffusing && *outcome != Outcome::Retained {
                            track.pushes += 1;
                        }
                        track.diffusing |= outcome.starts_diffusion();
                    }
                    Message::Announce { .. }
                        if d.from != track.origin && track.first_foreign_announce.is_none_or(|cur| d.sent_at < cur) =>
                    {
                        track.first_foreign_announce = Some(d.sent_at);
                    }
                    _ => {}
                }
            }
            TraceEntry::Timeout { tx, outcome, .. } => {
                self.count_outcome(*outcome);
                if let Some(track) = self.txs.get_mut(tx) {
                    if *outcome == Outcome::Retried {
                        track.retries += 1;
                    }
                    track.diffusing |= outcome.starts_diffusion();
                }
            }
            TraceEntry::Epoch { node, proxy_set, .. } => {
                self.proxy_sets[node.idx()].clone_from(proxy_set);
            }
            TraceEntry::AddrOrigin { .. } => self.addr.tally(topo, &rec.entry),
        }
    }

    pub fn finish(self, end_time: T, non_quiescent: bool) -> (RunMetrics, ObservationLog<T>) {
        let topo = self.topo;
        let report = first_spy_estimate(&self.observations.entries);
        let truth: BTreeMap<TxId, NodeId> = self.txs.iter().map(|(k, t)| (*k, t.origin)).collect();
        let scores = score(&report, &truth);
        let (acc_r, acc_u) = report.by_class(topo);

        let mut txs = Vec::with_capacity(self.txs.len());
        let mut hops = Vec::new();
        let (mut l50, mut l90, mut l100) = (Vec::new(), Vec::new(), Vec::new());
        let mut concealment_eligible = 0;
        let mut concealment_violations = 0;
        for (txid, t) in &self.txs {
            let cov = t.coverage.coverage();
            let accusation = report.accusations.get(txid);
            let proxy_hops = t.diffusing.then_some(t.pushes);
            if let Some(h) = proxy_hops {
                hops.push(h as f64);
            }
            let rel = |x: Option<T>| x.map(|v| (v - t.created).as_f64());
            l50.extend(rel(cov.t50));
            l90.extend(rel(cov.t90));
            l100.extend(rel(cov.t100));
            if t.create_outcome == Outcome::Proxied && t.proxy_set_clean {
                concealment_eligible += 1;
                if let Some(a) = accusation {
                    let exposed = a.node == t.origin && t.first_foreign_announce.is_none_or(|f| f > a.first_seen);
                    if exposed {
                        concealment_violations += 1;
                    }
                }
            }
            txs.push(TxMetrics {
                txid: *txid,
                origin: t.origin,
                origin_class: topo.nodes[t.origin.idx()].reachability.token().to_string(),
                accused: accusation.map(|a| a.node),
                correct: accusation.is_some_and(|a| a.node == t.origin),
                proxy_hops,
                create_time: t.created.as_f64(),
                t50: cov.t50.map(Real::as_f64),
                t90: cov.t90.map(Real::as_f64),
                t100: cov.t100.map(Real::as_f64),
                retries: t.retries,
            });
        }
        let fully_covered = l100.len() as u64;
        hops.sort_by(f64::total_cmp);
        let aggregates = Aggregates {
            scores,
            first_spy_accuracy: scores.accuracy,
            observed: report.accusations.len() as u64,
            accusations_reachable: acc_r as u64,
            accusations_unreachable: acc_u as u64,
            mean_hops: (!hops.is_empty()).then(|| hops.iter().sum::<f64>() / hops.len() as f64),
            median_hops: quantile(&hops, 0.5),
            t50_latency: LatencySummary::of(l50),
            t90_latency: LatencySummary::of(l90),
            t100_latency: LatencySummary::of(l100),
            fully_covered,
            messages: self.messages,
            addr: self.addr,
            duplicates: self.duplicates,
            violations: self.violations,
            retries: self.retries,
            capped: self.capped,
            fallbacks: self.fallbacks,
            retained: self.retained,
            concealment_eligible,
            concealment_violations,
            non_quiescent,
            end_time: end_time.as_f64(),
        };
        (RunMetrics { aggregates, txs }, self.observations)
    }
}

/// Recomputes run metrics from an exported trace.
pub fn metrics_from_trace<T: Real>(
    trace: &[TraceRecord<T>],
    topology: &Topology<T>,
    end_time: T,
    non_quiescent: bool,
) -> (RunMetrics, ObservationLog<T>) {
    let mut c = MetricsCollector::new(topology);
    for rec in trace {
        c.observe(rec);
    }
    c.finish(end_time, non_quiescent)
}
