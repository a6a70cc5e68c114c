//! Deterministic discrete-event engine.
//!
//! A run is single threaded: every random draw comes from one seeded stream
//! and events are dispatched in `(time, seq)` order, so identical inputs give
//! identical traces.

mod event;
mod rng;
mod trace;

pub use event::{Delivery, Event, Message, Payload, ScheduleError, Scheduler, SimTime};
pub use rng::{sample_exponential, stream, BadRate, SeededRng};
pub use trace::{format_trace, parse_trace, Outcome, TraceEntry, TraceParseError, TraceRecord};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::adversary::{Behavior, ObservationLog};
use crate::metrics::{MetricsCollector, RunMetrics};
use crate::net::{LinkId, NodeId, Reachability, Topology};
use crate::protocols::{Eligible, Mode, NodeProtocolState, ProtocolParams};
use crate::scalar::Real;
use crate::workload::Workload;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Rate(#[from] BadRate),
    #[error("invalid protocol parameters: {0}")]
    Params(String),
    #[error("invalid workload: {0}")]
    Workload(String),
}

/// Self-address gossip: each advertising node originates one announcement per
/// round, its first-hop receivers forward it once to their other peers.
#[derive(Clone, Debug, PartialEq)]
pub struct AddrGossip<T> {
    pub enabled: bool,
    pub advertise_unreachable: bool,
    pub interval: T,
    pub rounds: u32,
}

impl<T: Real> Default for AddrGossip<T> {
    fn default() -> Self {
        AddrGossip {
            enabled: false,
            advertise_unreachable: true,
            interval: T::lit(600.0),
            rounds: 1,
        }
    }
}

pub struct RunInput<'a, T> {
    pub topology: &'a Topology<T>,
    pub params: ProtocolParams<T>,
    pub behavior: Behavior,
    pub workload: &'a Workload<T>,
    pub addr: AddrGossip<T>,
    pub t_end: T,
    pub seed: u64,
    pub keep_trace: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub trace: Option<Vec<TraceRecord<T>>>,
    pub observations: ObservationLog<T>,
    pub metrics: RunMetrics,
    /// `t_end` was reached with work still queued.
    pub non_quiescent: bool,
    pub end_time: T,
    pub dispatched: u64,
}

pub(crate) struct Simulation<'a, T: Real> {
    pub(crate) topo: &'a Topology<T>,
    /// Every link incident to a node, with the peer on the other end.
    pub(crate) adj: Vec<Vec<(LinkId, NodeId)>>,
    /// First link to each distinct peer, sorted by peer id.
    pub(crate) peers: Vec<Vec<(NodeId, LinkId)>>,
    /// Distinct peers this node opened a connection to, sorted.
    pub(crate) outbound: Vec<Vec<NodeId>>,
    pub(crate) eligible: Vec<Eligible>,
    pub(crate) params: ProtocolParams<T>,
    pub(crate) behavior: Behavior,
    pub(crate) states: Vec<NodeProtocolState<T>>,
    pub(crate) rng: SeededRng,
    pub(crate) sched: Scheduler<T>,
    pub(crate) epoch_offset: Vec<T>,
}

impl<'a, T: Real> Simulation<'a, T> {
    pub(crate) fn new(topo: &'a Topology<T>, params: ProtocolParams<T>, behavior: Behavior, seed: u64) -> Self {
        let n = topo.nodes.len();
        let mut adj: Vec<Vec<(LinkId, NodeId)>> = vec![Vec::new(); n];
        let mut outbound: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut first_link: Vec<BTreeMap<NodeId, LinkId>> = vec![BTreeMap::new(); n];
        for (i, l) in topo.links.iter().enumerate() {
            let id = LinkId(i as u32);
            adj[l.initiator.idx()].push((id, l.acceptor));
            adj[l.acceptor.idx()].push((id, l.initiator));
            outbound[l.initiator.idx()].push(l.acceptor);
            first_link[l.initiator.idx()].entry(l.acceptor).or_insert(id);
            first_link[l.acceptor.idx()].entry(l.initiator).or_insert(id);
        }
        for o in &mut outbound {
            o.sort_unstable();
            o.dedup();
        }
        let peers: Vec<Vec<(NodeId, LinkId)>> = first_link.into_iter().map(|m| m.into_iter().collect()).collect();
        let eligible = (0..n)
            .map(|i| {
                if topo.nodes[i].reachability == Reachability::Reachable {
                    let mut by_bucket: BTreeMap<_, Vec<NodeId>> = BTreeMap::new();
                    for &(p, _) in &peers[i] {
                        let rec = &topo.nodes[p.idx()];
                        if rec.reachability == Reachability::Unreachable {
                            by_bucket.entry(rec.bucket).or_default().push(p);
                        }
                    }
                    Eligible::Bucketed(by_bucket)
                } else {
                    Eligible::Flat(
                        peers[i]
                            .iter()
                            .map(|&(p, _)| p)
                            .filter(|p| topo.nodes[p.idx()].reachability == Reachability::Reachable)
                            .collect(),
                    )
                }
            })
            .collect();
        Simulation {
            topo,
            adj,
            peers,
            outbound,
            eligible,
            params,
            behavior,
            states: (0..n).map(|_| NodeProtocolState::default()).collect(),
            rng: SeededRng::derive(seed, stream::PROTOCOL),
            sched: Scheduler::new(),
            epoch_offset: vec![T::zero(); n],
        }
    }

    pub(crate) fn link_to(&self, node: NodeId, peer: NodeId) -> LinkId {
        let row = &self.peers[node.idx()];
        let i = row
            .binary_search_by_key(&peer, |&(p, _)| p)
            .expect("proxy targets are connected peers");
        row[i].1
    }

    fn on_addr_tick(&mut self, node: NodeId) -> Result<(), SimError> {
        let now = self.sched.now();
        for &(peer, link) in &self.peers[node.idx()] {
            self.sched.schedule(
                now + self.topo.links[link.idx()].latency_mean,
                Payload::Deliver(Delivery {
                    msg: Message::Addr {
                        origin: node,
                        relayed: false,
                    },
                    from: node,
                    to: peer,
                    link,
                    sent_at: now,
                }),
            )?;
        }
        Ok(())
    }

    fn on_addr(&mut self, d: &Delivery<T>, origin: NodeId, relayed: bool) -> Result<Outcome, SimError> {
        if relayed {
            return Ok(Outcome::Ended);
        }
        let now = self.sched.now();
        for &(peer, link) in &self.peers[d.to.idx()] {
            if peer == d.from {
                continue;
            }
            self.sched.schedule(
                now + self.topo.links[link.idx()].latency_mean,
                Payload::Deliver(Delivery {
                    msg: Message::Addr { origin, relayed: true },
                    from: d.to,
                    to: peer,
                    link,
                    sent_at: now,
                }),
            )?;
        }
        Ok(Outcome::Relayed)
    }

    fn dispatch(&mut self, payload: Payload<T>) -> Result<TraceEntry<T>, SimError> {
        Ok(match payload {
            Payload::CreateTx { origin, tx } => TraceEntry::Create {
                tx,
                origin,
                outcome: self.on_create(origin, tx)?,
            },
            Payload::Deliver(d) => {
                let outcome = match d.msg {
                    Message::Announce { tx } => self.on_announce(&d, tx)?,
                    Message::ProxyPush { tx } => self.on_receive_proxying(&d, tx)?,
                    Message::Addr { origin, relayed } => self.on_addr(&d, origin, relayed)?,
                };
                TraceEntry::Deliver { delivery: d, outcome }
            }
            Payload::TimeoutFired { node, tx } => TraceEntry::Timeout {
                node,
                tx,
                outcome: self.on_timeout(node, tx)?,
            },
            Payload::EpochTick { node } => {
                let (active, proxy_set) = self.on_epoch_tick(node)?;
                TraceEntry::Epoch {
                    node,
                    active,
                    proxy_set,
                }
            }
            Payload::AddrTick { node } => {
                self.on_addr_tick(node)?;
                TraceEntry::AddrOrigin { node }
            }
        })
    }
}

/// Runs one simulation until no work is queued or `t_end` passes.
pub fn run<T: Real>(input: RunInput<'_, T>) -> Result<RunOutput<T>, SimError> {
    input.params.validate().map_err(SimError::Params)?;
    if !(input.t_end >= T::zero()) {
        return Err(SimError::Params(format!(
            "t_end must be non-negative, got {}",
            input.t_end
        )));
    }
    let topo = input.topology;
    let n = topo.nodes.len();
    let mut sim = Simulation::new(topo, input.params.clone(), input.behavior, input.seed);

    if sim.params.mode == Mode::Proxy {
        for i in 0..n {
            sim.epoch_offset[i] = sim.rng.unit::<T>() * sim.params.epoch_len;
            sim.sched
                .schedule(T::zero(), Payload::EpochTick { node: NodeId(i as u32) })?;
        }
    }
    for tx in &input.workload.txs {
        if tx.origin.idx() >= n {
            return Err(SimError::Workload(format!(
                "origin {} of tx {} is not a node",
                tx.origin, tx.txid
            )));
        }
        sim.sched.schedule(
            tx.created_at,
            Payload::CreateTx {
                origin: tx.origin,
                tx: tx.txid,
            },
        )?;
    }
    if input.addr.enabled {
        if !(input.addr.interval > T::zero()) {
            return Err(SimError::Params("addr interval must be positive".into()));
        }
        for rec in &topo.nodes {
            let advertises = rec.is_honest() && (rec.is_reachable() || input.addr.advertise_unreachable);
            if !advertises {
                continue;
            }
            let offset = sim.rng.unit::<T>() * input.addr.interval;
            for r in 0..input.addr.rounds {
                let at = offset + T::from_u32(r).expect("round fits") * input.addr.interval;
                sim.sched.schedule(at, Payload::AddrTick { node: rec.id })?;
            }
        }
    }

    let mut collector = MetricsCollector::new(topo);
    let mut trace = input.keep_trace.then(Vec::new);
    let mut non_quiescent = false;
    let mut dispatched = 0u64;
    while let Some(next) = sim.sched.peek_time() {
        if sim.sched.pending_work() == 0 {
            break;
        }
        if next > input.t_end {
            non_quiescent = true;
            break;
        }
        let ev = sim.sched.pop().expect("peeked");
        let entry = sim.dispatch(ev.payload)?;
        let rec = TraceRecord {
            time: ev.time.0,
            seq: ev.seq,
            entry,
        };
        collector.observe(&rec);
        dispatched += 1;
        if let Some(t) = trace.as_mut() {
            t.push(rec);
        }
    }
    let end_time = sim.sched.now();
    let (metrics, observations) = collector.finish(end_time, non_quiescent);
    Ok(RunOutput {
        trace,
        observations,
        metrics,
        non_quiescent,
        end_time,
        dispatched,
    })
}
