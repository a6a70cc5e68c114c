//! Event trace: one line per dispatched event,
//! `<time> <seq> <kind> <fields...>`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::event::{Delivery, Message};
use crate::net::{LinkId, NodeId};
use crate::protocols::TxId;
use crate::scalar::Real;

/// What the receiving node decided when an event was dispatched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// Kept in the proxying phase and pushed to a proxy.
    Proxied,
    /// Switched to the diffusion phase.
    Diffused,
    /// Wanted to proxy but had no usable proxy set, diffused instead.
    Fallback,
    /// First announcement of a transaction, relayed onwards.
    Relayed,
    Duplicate,
    /// Adversarial proxy swallowed the transaction.
    Retained,
    /// Proxied transaction from the wrong peer class, diffused.
    Violation,
    /// Timeout found a majority of outbound peers had announced it back.
    Completed,
    Retried,
    /// Retry budget exhausted, diffused locally.
    Capped,
    /// Timeout for a transaction no longer in the proxying phase.
    Stale,
    /// Address message that is not forwarded further.
    Ended,
}

impl Outcome {
    pub fn token(self) -> &'static str {
        match self {
            Outcome::Proxied => "proxy",
            Outcome::Diffused => "diffuse",
            Outcome::Fallback => "fallback",
            Outcome::Relayed => "relay",
            Outcome::Duplicate => "dup",
            Outcome::Retained => "retain",
            Outcome::Violation => "violation",
            Outcome::Completed => "done",
            Outcome::Retried => "retry",
            Outcome::Capped => "capped",
            Outcome::Stale => "stale",
            Outcome::Ended => "end",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        Some(match s {
            "proxy" => Outcome::Proxied,
            "diffuse" => Outcome::Diffused,
            "fallback" => Outcome::Fallback,
            "relay" => Outcome::Relayed,
            "dup" => Outcome::Duplicate,
            "retain" => Outcome::Retained,
            "violation" => Outcome::Violation,
            "done" => Outcome::Completed,
            "retry" => Outcome::Retried,
            "capped" => Outcome::Capped,
            "stale" => Outcome::Stale,
            "end" => Outcome::Ended,
            _ => return None,
        })
    }

    /// The node started announcing the transaction as a result.
    pub fn starts_diffusion(self) -> bool {
        matches!(
            self,
            Outcome::Diffused
                | Outcome::Fallback
                | Outcome::Relayed
                | Outcome::Violation
                | Outcome::Capped
                | Outcome::Completed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEntry<T> {
    Create {
        tx: TxId,
        origin: NodeId,
        outcome: Outcome,
    },
    Deliver {
        delivery: Delivery<T>,
        outcome: Outcome,
    },
    Timeout {
        node: NodeId,
        tx: TxId,
        outcome: Outcome,
    },
    Epoch {
        node: NodeId,
        active: bool,
        proxy_set: Vec<NodeId>,
    },
    AddrOrigin {
        node: NodeId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<T> {
    pub time: T,
    pub seq: u64,
    pub entry: TraceEntry<T>,
}

impl<T: Real> fmt::Display for TraceRecord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.time, self.seq)?;
        match &self.entry {
            TraceEntry::Create { tx, origin, outcome } => {
                write!(f, "create {tx} {origin} {}", outcome.token())
            }
            TraceEntry::Deliver { delivery: d, outcome } => {
                let (kind, subject) = match d.msg {
                    Message::Announce { tx } => ("announce", tx.0),
                    Message::ProxyPush { tx } => ("proxy", tx.0),
                    Message::Addr { origin, relayed: false } => ("addr", origin.0 as u64),
                    Message::Addr { origin, relayed: true } => ("addr_relayed", origin.0 as u64),
                };
                write!(
                    f,
                    "deliver {kind} {subject} {} {} {} {} {}",
                    d.from,
                    d.to,
                    d.link,
                    d.sent_at,
                    outcome.token()
                )
            }
            TraceEntry::Timeout { node, tx, outcome } => {
                write!(f, "timeout {node} {tx} {}", outcome.token())
            }
            TraceEntry::Epoch {
                node,
                active,
                proxy_set,
            } => {
                write!(f, "epoch {node} {} ", u8::from(*active))?;
                if proxy_set.is_empty() {
                    f.write_str("-")
                } else {
                    for (i, p) in proxy_set.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{p}")?;
                    }
                    Ok(())
                }
            }
            TraceEntry::AddrOrigin { node } => write!(f, "addr_origin {node}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

fn num<V: FromStr>(s: &str, what: &str) -> Result<V, String> {
    s.parse().map_err(|_| format!("bad {what} `{s}`"))
}

fn outcome(s: &str) -> Result<Outcome, String> {
    Outcome::from_token(s).ok_or_else(|| format!("bad outcome `{s}`"))
}

impl<T: Real> TraceRecord<T> {
    fn parse_fields(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 3 {
            return Err("too few fields".into());
        }
        let time: T = num(f[0], "time")?;
        let seq: u64 = num(f[1], "seq")?;
        let entry = match (f[2], &f[3..]) {
            ("create", [tx, origin, oc]) => TraceEntry::Create {
                tx: TxId(num(tx, "txid")?),
                origin: NodeId(num(origin, "node")?),
                outcome: outcome(oc)?,
            },
            ("deliver", [kind, subject, from, to, link, sent_at, oc]) => {
                let msg = match *kind {
                    "announce" => Message::Announce {
                        tx: TxId(num(subject, "txid")?),
                    },
                    "proxy" => Message::ProxyPush {
                        tx: TxId(num(subject, "txid")?),
                    },
                    "addr" => Message::Addr {
                        origin: NodeId(num(subject, "node")?),
                        relayed: false,
                    },
                    "addr_relayed" => Message::Addr {
                        origin: NodeId(num(subject, "node")?),
                        relayed: true,
                    },
                    other => return Err(format!("bad message kind `{other}`")),
                };
                TraceEntry::Deliver {
                    delivery: Delivery {
                        msg,
                        from: NodeId(num(from, "node")?),
                        to: NodeId(num(to, "node")?),
                        link: LinkId(num(link, "link")?),
                        sent_at: num(sent_at, "time")?,
                    },
                    outcome: outcome(oc)?,
                }
            }
            ("timeout", [node, tx, oc]) => TraceEntry::Timeout {
                node: NodeId(num(node, "node")?),
                tx: TxId(num(tx, "txid")?),
                outcome: outcome(oc)?,
            },
            ("epoch", [node, active, set]) => TraceEntry::Epoch {
                node: NodeId(num(node, "node")?),
                active: match *active {
                    "1" => true,
                    "0" => false,
                    other => return Err(format!("bad flag `{other}`")),
                },
                proxy_set: if *set == "-" {
                    Vec::new()
                } else {
                    set.split(',')
                        .map(|p| num(p, "node").map(NodeId))
                        .collect::<Result<_, _>>()?
                },
            },
            ("addr_origin", [node]) => TraceEntry::AddrOrigin {
                node: NodeId(num(node, "node")?),
            },
            (kind, _) => return Err(format!("bad event `{kind}` or wrong field count")),
        };
        Ok(TraceRecord { time, seq, entry })
    }
}

pub fn format_trace<T: Real>(records: &[TraceRecord<T>]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(records.len() * 48);
    for r in records {
        let _ = writeln!(s, "{r}");
    }
    s
}

pub fn parse_trace<T: Real>(text: &str) -> Result<Vec<TraceRecord<T>>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceRecord::parse_fields(l).map_err(|msg| TraceParseError { line: i + 1, msg }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_outcome() -> impl Strategy<Value = Outcome> {
        (0usize..12).prop_map(|i| {
            [
                Outcome::Proxied,
                Outcome::Diffused,
                Outcome::Fallback,
                Outcome::Relayed,
                Outcome::Duplicate,
                Outcome::Retained,
                Outcome::Violation,
                Outcome::Completed,
                Outcome::Retried,
                Outcome::Capped,
                Outcome::Stale,
                Outcome::Ended,
            ][i]
        })
    }

    fn arb_record() -> impl Strategy<Value = TraceRecord<f64>> {
        let entry = prop_oneof![
            (any::<u64>(), any::<u32>(), arb_outcome()).prop_map(|(t, o, oc)| TraceEntry::Create {
                tx: TxId(t),
                origin: NodeId(o),
                outcome: oc
            }),
            (
                0u8..4,
                any::<u32>(),
                any::<u32>(),
                any::<u32>(),
                any::<u32>(),
                0.0f64..1e6,
                arb_outcome()
            )
                .prop_map(|(k, s, a, b, l, sent, oc)| {
                    let msg = match k {
                        0 => Message::Announce { tx: TxId(s as u64) },
                        1 => Message::ProxyPush { tx: TxId(s as u64) },
                        2 => Message::Addr {
                            origin: NodeId(s),
                            relayed: false,
                        },
                        _ => Message::Addr {
                            origin: NodeId(s),
                            relayed: true,
                        },
                    };
                    TraceEntry::Deliver {
                        delivery: Delivery {
                            msg,
                            from: NodeId(a),
                            to: NodeId(b),
                            link: LinkId(l),
                            sent_at: sent,
                        },
                        outcome: oc,
                    }
                }),
            (any::<u32>(), any::<u64>(), arb_outcome()).prop_map(|(n, t, oc)| TraceEntry::Timeout {
                node: NodeId(n),
                tx: TxId(t),
                outcome: oc
            }),
            (any::<u32>(), any::<bool>(), prop::collection::vec(any::<u32>(), 0..5)).prop_map(|(n, a, s)| {
                TraceEntry::Epoch {
                    node: NodeId(n),
                    active: a,
                    proxy_set: s.into_iter().map(NodeId).collect(),
                }
            }),
            any::<u32>().prop_map(|n| TraceEntry::AddrOrigin { node: NodeId(n) }),
        ];
        (0.0f64..1e7, any::<u64>(), entry).prop_map(|(time, seq, entry)| TraceRecord { time, seq, entry })
    }

    proptest! {
        #[test]
        fn text_roundtrip(recs in prop::collection::vec(arb_record(), 0..20)) {
            let text = format_trace(&recs);
            prop_assert_eq!(parse_trace::<f64>(&text).unwrap(), recs);
        }
    }

    #[test]
    fn rejects_garbage() {
        let e = parse_trace::<f64>("0 0 create 1 2 proxy\n1 x create 1 2 proxy\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_trace::<f64>("0 0 frobnicate\n").is_err());
    }
}
