//! Eavesdropping adversary: configuration, pooled observation log and the
//! first-spy estimator.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::net::{NodeId, Reachability, Topology};
use crate::protocols::TxId;
use crate::scalar::Real;
use crate::sim::{Delivery, Message};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Behavior {
    /// Follow the honest protocol while logging everything.
    #[default]
    LogOnly,
    /// Log and drop every proxied transaction handed to us.
    RetainProxied,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryConfig {
    pub enabled: bool,
    pub num_spy_r: usize,
    pub num_adv_u: usize,
    pub connections_per_honest_r: usize,
    pub behavior: Behavior,
    /// Number of distinct buckets adversarial addresses fall into.
    pub bucket_span: usize,
    /// Honest reachable node every adversarial unreachable node connects to.
    pub target_node: Option<NodeId>,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            enabled: false,
            num_spy_r: 1,
            num_adv_u: 0,
            connections_per_honest_r: 1,
            behavior: Behavior::LogOnly,
            bucket_span: 1,
            target_node: None,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.enabled {
            return Ok(());
        }
        if self.num_spy_r > 0 && self.connections_per_honest_r == 0 {
            return Err("connections_per_r must be at least 1".into());
        }
        if self.bucket_span == 0 || self.bucket_span > u16::MAX as usize {
            return Err("bucket_span out of range".into());
        }
        Ok(())
    }
}

/// What an adversarial node does with a proxied transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProxyAction {
    FollowProtocol,
    Retain,
}

pub fn adversarial_behavior(behavior: Behavior) -> ProxyAction {
    match behavior {
        Behavior::LogOnly => ProxyAction::FollowProtocol,
        Behavior::RetainProxied => ProxyAction::Retain,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ObservedKind {
    Announce,
    ProxyPush,
}

impl ObservedKind {
    pub fn token(self) -> &'static str {
        match self {
            ObservedKind::Announce => "announce",
            ObservedKind::ProxyPush => "proxy",
        }
    }
}

impl fmt::Display for ObservedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub txid: TxId,
    pub observed_at: T,
    /// Honest endpoint of the link the message arrived on.
    pub from_node: NodeId,
    pub msg_kind: ObservedKind,
    /// Dispatch sequence number of the delivery.
    pub seq: u64,
}

/// Append-only log pooled over every adversarial endpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationLog<T> {
    pub entries: Vec<Observation<T>>,
}

impl<T: Real> ObservationLog<T> {
    pub fn new() -> Self {
        ObservationLog { entries: Vec::new() }
    }

    /// Logs a transaction message received by an adversarial node from an
    /// honest one. Anything else is ignored; returns whether it was logged.
    pub fn record(&mut self, topology: &Topology<T>, time: T, seq: u64, delivery: &Delivery<T>) -> bool {
        let receiver = &topology.nodes[delivery.to.idx()];
        let sender = &topology.nodes[delivery.from.idx()];
        if receiver.is_honest() || !sender.is_honest() {
            return false;
        }
        let (txid, msg_kind) = match delivery.msg {
            Message::Announce { tx } => (tx, ObservedKind::Announce),
            Message::ProxyPush { tx } => (tx, ObservedKind::ProxyPush),
            Message::Addr { .. } => return false,
        };
        self.entries.push(Observation {
            txid,
            observed_at: time,
            from_node: delivery.from,
            msg_kind,
            seq,
        });
        true
    }

    /// CSV with header `txid,observed_at,from_node,msg_kind`, rows in dispatch order.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["txid", "observed_at", "from_node", "msg_kind"])
            .expect("in-memory write");
        for o in &self.entries {
            w.write_record([
                o.txid.to_string(),
                o.observed_at.to_string(),
                o.from_node.to_string(),
                o.msg_kind.token().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Reads a log written by [`ObservationLog::to_csv`]. Row order becomes
    /// the sequence number.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != 4 {
                return Err(format!("row {}: expected 4 fields", i + 1));
            }
            let bad = |what: &str| format!("row {}: bad {what}", i + 1);
            let msg_kind = match &rec[3] {
                "announce" => ObservedKind::Announce,
                "proxy" => ObservedKind::ProxyPush,
                _ => return Err(bad("msg_kind")),
            };
            entries.push(Observation {
                txid: TxId(rec[0].parse().map_err(|_| bad("txid"))?),
                observed_at: rec[1].parse().map_err(|_| bad("observed_at"))?,
                from_node: NodeId(rec[2].parse().map_err(|_| bad("from_node"))?),
                msg_kind,
                seq: i as u64,
            });
        }
        Ok(ObservationLog { entries })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accusation<T> {
    pub node: NodeId,
    pub first_seen: T,
    pub seq: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FirstSpyReport<T> {
    pub accusations: BTreeMap<TxId, Accusation<T>>,
}

impl<T: Real> FirstSpyReport<T> {
    /// Number of accusations naming reachable and unreachable nodes.
    pub fn by_class(&self, topology: &Topology<T>) -> (usize, usize) {
        self.accusations.values().fold((0, 0), |(r, u), a| {
            match topology.nodes.get(a.node.idx()).map(|n| n.reachability) {
                Some(Reachability::Unreachable) => (r, u + 1),
                _ => (r + 1, u),
            }
        })
    }
}

/// Accuses, for every observed transaction, the sender of its earliest
/// observation. Ties on time go to the lower sequence number.
pub fn first_spy_estimate<T: Real>(observations: &[Observation<T>]) -> FirstSpyReport<T> {
    let mut accusations: BTreeMap<TxId, Accusation<T>> = BTreeMap::new();
    for o in observations {
        let cand = Accusation {
            node: o.from_node,
            first_seen: o.observed_at,
            seq: o.seq,
        };
        accusations
            .entry(o.txid)
            .and_modify(|cur| {
                if (o.observed_at, o.seq) < (cur.first_seen, cur.seq) {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    }
    FirstSpyReport { accusations }
}
