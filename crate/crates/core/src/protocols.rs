//! Per-node propagation rules: baseline diffusion and proxied broadcast with
//! probabilistic mixing, epochs, bucketed proxy selection and timeouts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{adversarial_behavior, ProxyAction};
use crate::net::{BucketId, NodeId};
use crate::scalar::Real;
use crate::sim::{sample_exponential, Delivery, Message, Outcome, Payload, SimError, Simulation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A transaction of the workload. `origin` is ground truth and only read by
/// metrics; protocol code never sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transaction<T> {
    pub txid: TxId,
    pub origin: NodeId,
    pub created_at: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Diffusion,
    Proxy,
}

impl Mode {
    pub fn token(self) -> &'static str {
        match self {
            Mode::Diffusion => "diffusion",
            Mode::Proxy => "proxy",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "diffusion" => Ok(Mode::Diffusion),
            "proxy" => Ok(Mode::Proxy),
            other => Err(format!("unknown mode `{other}` (expected diffusion or proxy)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams<T> {
    pub mode: Mode,
    /// Probability of keeping a received proxied transaction in the proxying phase.
    pub p: T,
    /// Seconds before a proxied transaction is checked; infinite disables it.
    pub timeout: T,
    pub epoch_len: T,
    pub proxy_set_size: usize,
    /// Distinct buckets of unreachable peers a reachable node needs to proxy.
    pub activation_min_buckets: usize,
    /// Rate of the per-neighbor exponential announcement delay.
    pub diffusion_rate: T,
    /// Re-proxy attempts before a node gives up and diffuses itself.
    pub max_retries: u32,
}

impl<T: Real> Default for ProtocolParams<T> {
    fn default() -> Self {
        ProtocolParams {
            mode: Mode::Proxy,
            p: T::lit(0.8),
            timeout: T::lit(30.0),
            epoch_len: T::lit(600.0),
            proxy_set_size: 4,
            activation_min_buckets: 2,
            diffusion_rate: T::lit(0.5),
            max_retries: 10,
        }
    }
}

impl<T: Real> ProtocolParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p >= T::zero() && self.p < T::one()) {
            return Err(format!("p must be in [0, 1), got {}", self.p));
        }
        if !(self.timeout > T::zero()) {
            return Err(format!("timeout must be positive, got {}", self.timeout));
        }
        if !(self.epoch_len > T::zero()) || !self.epoch_len.is_finite() {
            return Err(format!("epoch_len must be positive and finite, got {}", self.epoch_len));
        }
        if self.proxy_set_size == 0 {
            return Err("proxy_set_size must be at least 1".into());
        }
        if self.activation_min_buckets == 0 {
            return Err("activation_min_buckets must be at least 1".into());
        }
        if !(self.diffusion_rate > T::zero()) || !self.diffusion_rate.is_finite() {
            return Err(format!("diffusion_rate must be positive, got {}", self.diffusion_rate));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Proxying,
    Diffused,
}

/// What one node knows about one transaction.
#[derive(Clone, Debug, PartialEq)]
pub struct TxState<T> {
    pub phase: Phase,
    /// Peers known to already have the transaction.
    pub known: Vec<NodeId>,
    /// Outbound peers that announced it to us.
    pub announced_back: Vec<NodeId>,
    pub deadline: Option<T>,
    pub retries: u32,
    /// Peer we first received the transaction from; never used as its proxy.
    pub source: Option<NodeId>,
}

impl<T> TxState<T> {
    /// `from` is the first sender; it counts as holding the tx only when it
    /// announced it, since proxied hops must still be announced back.
    fn new(from: Option<NodeId>, announced: bool) -> Self {
        TxState {
            phase: Phase::Diffused,
            source: from,
            known: from.filter(|_| announced).into_iter().collect(),
            announced_back: Vec::new(),
            deadline: None,
            retries: 0,
        }
    }

    fn note_known(&mut self, peer: NodeId) {
        if !self.known.contains(&peer) {
            self.known.push(peer);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeProtocolState<T> {
    pub txs: HashMap<TxId, TxState<T>>,
    pub proxy_set: Vec<NodeId>,
    pub active: bool,
}

/// Peers a node may pick proxies from.
#[derive(Clone, Debug, PartialEq)]
pub enum Eligible {
    /// Reachable node: unreachable peers grouped by bucket.
    Bucketed(BTreeMap<BucketId, Vec<NodeId>>),
    /// Unreachable node: reachable peers, no bucketing.
    Flat(Vec<NodeId>),
}

impl Eligible {
    pub fn is_active(&self, min_buckets: usize) -> bool {
        match self {
            Eligible::Bucketed(b) => b.values().filter(|v| !v.is_empty()).count() >= min_buckets,
            Eligible::Flat(v) => !v.is_empty(),
        }
    }
}

/// Picks up to `k` proxies. Bucketed candidates are taken one per bucket, in
/// random bucket order, until buckets run out; remaining slots are filled
/// uniformly from the peers not yet chosen.
pub fn select_proxy_set<R: Rng + ?Sized>(eligible: &Eligible, k: usize, rng: &mut R) -> Vec<NodeId> {
    match eligible {
        Eligible::Flat(peers) => {
            let n = k.min(peers.len());
            index::sample(rng, peers.len(), n)
                .into_iter()
                .map(|i| peers[i])
                .collect()
        }
        Eligible::Bucketed(buckets) => {
            let mut order: Vec<&Vec<NodeId>> = buckets.values().filter(|v| !v.is_empty()).collect();
            order.shuffle(rng);
            let mut chosen: Vec<NodeId> = Vec::with_capacity(k);
            for members in order.iter().take(k) {
                chosen.push(members[rng.gen_range(0..members.len())]);
            }
            if chosen.len() < k {
                let rest: Vec<NodeId> = order
                    .iter()
                    .flat_map(|m| m.iter().copied())
                    .filter(|p| !chosen.contains(p))
                    .collect();
                let n = (k - chosen.len()).min(rest.len());
                chosen.extend(index::sample(rng, rest.len(), n).into_iter().map(|i| rest[i]));
            }
            chosen
        }
    }
}

/// Strict majority: `announced > outbound / 2`.
pub fn strict_majority(announced: usize, outbound: usize) -> bool {
    2 * announced > outbound
}

impl<T: Real> Simulation<'_, T> {
    pub(crate) fn on_epoch_tick(&mut self, node: NodeId) -> Result<(bool, Vec<NodeId>), SimError> {
        let i = node.idx();
        let set = select_proxy_set(&self.eligible[i], self.params.proxy_set_size, &mut self.rng);
        let active = !set.is_empty() && self.eligible[i].is_active(self.params.activation_min_buckets);
        let st = &mut self.states[i];
        st.proxy_set = set.clone();
        st.active = active;
        let now = self.sched.now();
        let next = if now < self.epoch_offset[i] {
            self.epoch_offset[i]
        } else {
            now + self.params.epoch_len
        };
        self.sched.schedule(next, Payload::EpochTick { node })?;
        Ok((active, set))
    }

    pub(crate) fn on_create(&mut self, node: NodeId, tx: TxId) -> Result<Outcome, SimError> {
        let st = &mut self.states[node.idx()];
        if st.txs.contains_key(&tx) {
            return Err(SimError::Workload(format!("transaction {tx} created twice")));
        }
        st.txs.insert(tx, TxState::new(None, false));
        if self.params.mode == Mode::Diffusion {
            self.diffuse(node, tx)?;
            return Ok(Outcome::Diffused);
        }
        if st.active && self.proxy(node, tx)? {
            Ok(Outcome::Proxied)
        } else {
            self.diffuse(node, tx)?;
            Ok(Outcome::Fallback)
        }
    }

    /// Sends `tx` to a random member of the proxy set, other than the peer it
    /// came from, and arms its timeout. Returns false when no member is left.
    pub(crate) fn proxy(&mut self, node: NodeId, tx: TxId) -> Result<bool, SimError> {
        let i = node.idx();
        let source = self.states[i].txs.get(&tx).and_then(|s| s.source);
        let candidates: Vec<NodeId> = self.states[i]
            .proxy_set
            .iter()
            .copied()
            .filter(|&p| Some(p) != source)
            .collect();
        if candidates.is_empty() {
            return Ok(false);
        }
        let target = candidates[self.rng.gen_range(0..candidates.len())];
        let link = self.link_to(node, target);
        let now = self.sched.now();
        let latency = self.topo.links[link.idx()].latency_mean;
        self.sched.schedule(
            now + latency,
            Payload::Deliver(Delivery {
                msg: Message::ProxyPush { tx },
                from: node,
                to: target,
                link,
                sent_at: now,
            }),
        )?;
        let deadline = now + self.params.timeout;
        let st = self.states[i].txs.get_mut(&tx).expect("proxied tx is known");
        st.phase = Phase::Proxying;
        if deadline.is_finite() {
            st.deadline = Some(deadline);
            self.sched.schedule(deadline, Payload::TimeoutFired { node, tx })?;
        } else {
            st.deadline = None;
        }
        Ok(true)
    }

    /// Announces `tx` over every link to a peer not known to have it, each
    /// after an independent exponential delay plus the link latency.
    pub(crate) fn diffuse(&mut self, node: NodeId, tx: TxId) -> Result<(), SimError> {
        let i = node.idx();
        let targets: Vec<_> = {
            let st = &self.states[i].txs[&tx];
            self.adj[i]
                .iter()
                .copied()
                .filter(|(_, p)| !st.known.contains(p))
                .collect()
        };
        let now = self.sched.now();
        for &(link, peer) in &targets {
            let delay = sample_exponential(&mut self.rng, self.params.diffusion_rate)?;
            self.sched.schedule(
                now + delay + self.topo.links[link.idx()].latency_mean,
                Payload::Deliver(Delivery {
                    msg: Message::Announce { tx },
                    from: node,
                    to: peer,
                    link,
                    sent_at: now,
                }),
            )?;
        }
        let st = self.states[i].txs.get_mut(&tx).expect("diffused tx is known");
        st.phase = Phase::Diffused;
        st.deadline = None;
        for (_, peer) in targets {
            st.note_known(peer);
        }
        Ok(())
    }

    pub(crate) fn on_announce(&mut self, d: &Delivery<T>, tx: TxId) -> Result<Outcome, SimError> {
        let (me, from) = (d.to, d.from);
        let outbound = self.outbound[me.idx()].binary_search(&from).is_ok();
        let st = &mut self.states[me.idx()];
        if let Some(entry) = st.txs.get_mut(&tx) {
            entry.note_known(from);
            if outbound && !entry.announced_back.contains(&from) {
                entry.announced_back.push(from);
            }
            return Ok(Outcome::Duplicate);
        }
        let mut entry = TxState::new(Some(from), true);
        if outbound {
            entry.announced_back.push(from);
        }
        st.txs.insert(tx, entry);
        self.diffuse(me, tx)?;
        Ok(Outcome::Relayed)
    }

    pub(crate) fn on_receive_proxying(&mut self, d: &Delivery<T>, tx: TxId) -> Result<Outcome, SimError> {
        let (me, from) = (d.to, d.from);
        let st = &mut self.states[me.idx()];
        if st.txs.contains_key(&tx) {
            return Ok(Outcome::Duplicate);
        }
        st.txs.insert(tx, TxState::new(Some(from), false));

        let me_rec = self.topo.nodes[me.idx()];
        if me_rec.role.is_adversarial() && adversarial_behavior(self.behavior) == ProxyAction::Retain {
            return Ok(Outcome::Retained);
        }
        if me_rec.reachability == self.topo.nodes[from.idx()].reachability {
            self.diffuse(me, tx)?;
            return Ok(Outcome::Violation);
        }
        if self.params.mode == Mode::Diffusion {
            self.diffuse(me, tx)?;
            return Ok(Outcome::Diffused);
        }
        let coin: T = self.rng.unit();
        if coin < self.params.p {
            if self.states[me.idx()].active && self.proxy(me, tx)? {
                return Ok(Outcome::Proxied);
            }
            self.diffuse(me, tx)?;
            return Ok(Outcome::Fallback);
        }
        self.diffuse(me, tx)?;
        Ok(Outcome::Diffused)
    }

    pub(crate) fn on_timeout(&mut self, node: NodeId, tx: TxId) -> Result<Outcome, SimError> {
        let i = node.idx();
        let outbound = self.outbound[i].len();
        let max_retries = self.params.max_retries;
        let Some(st) = self.states[i].txs.get_mut(&tx) else {
            return Ok(Outcome::Stale);
        };
        if st.phase != Phase::Proxying {
            return Ok(Outcome::Stale);
        }
        if strict_majority(st.announced_back.len(), outbound) {
            // Already diffusing: join in for peers that have not announced it.
            self.diffuse(node, tx)?;
            return Ok(Outcome::Completed);
        }
        if st.retries >= max_retries {
            self.diffuse(node, tx)?;
            return Ok(Outcome::Capped);
        }
        st.retries += 1;
        if self.proxy(node, tx)? {
            Ok(Outcome::Retried)
        } else {
            self.diffuse(node, tx)?;
            Ok(Outcome::Fallback)
        }
    }
}
