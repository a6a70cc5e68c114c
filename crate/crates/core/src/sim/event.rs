use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::net::{LinkId, NodeId};
use crate::protocols::TxId;
use crate::scalar::Real;

/// Simulated seconds since the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct SimTime<T>(pub T);

impl<T: Real> SimTime<T> {
    pub fn secs(self) -> T {
        self.0
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.0.partial_cmp(&other.0).unwrap_or(Ordering::Equal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Message {
    /// Inventory announcement; the request/response round trip is folded
    /// into its delivery delay.
    Announce { tx: TxId },
    /// Transaction sent point to point while in its proxying phase.
    ProxyPush { tx: TxId },
    /// Self-address advertisement of `origin`; `relayed` once it has been
    /// forwarded by a first-hop receiver.
    Addr { origin: NodeId, relayed: bool },
}

impl Message {
    pub fn carries_proxy_marker(&self) -> bool {
        matches!(self, Message::ProxyPush { .. })
    }

    pub fn tx(&self) -> Option<TxId> {
        match *self {
            Message::Announce { tx } | Message::ProxyPush { tx } => Some(tx),
            Message::Addr { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivery<T> {
    pub msg: Message,
    pub from: NodeId,
    pub to: NodeId,
    pub link: LinkId,
    pub sent_at: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload<T> {
    CreateTx { origin: NodeId, tx: TxId },
    Deliver(Delivery<T>),
    TimeoutFired { node: NodeId, tx: TxId },
    EpochTick { node: NodeId },
    AddrTick { node: NodeId },
}

impl<T> Payload<T> {
    /// Periodic housekeeping that never keeps a run alive on its own.
    pub fn is_background(&self) -> bool {
        matches!(self, Payload::EpochTick { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<T> {
    pub time: SimTime<T>,
    pub seq: u64,
    pub payload: Payload<T>,
}

// Heap entry ordered so that BinaryHeap pops the smallest (time, seq).
struct Entry<T>(Event<T>);

impl<T: Real> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Entry<T> {}

impl<T: Real> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("event at {at} is before the current time {now}")]
    TimeInPast { at: f64, now: f64 },
    #[error("event time {0} is not finite")]
    NotFinite(f64),
}

/// Priority queue of events in `(time, seq)` order. Sequence numbers are
/// handed out at scheduling time, so same-time events run in FIFO order.
pub struct Scheduler<T> {
    now: T,
    next_seq: u64,
    heap: BinaryHeap<Entry<T>>,
    work: usize,
}

impl<T: Real> Default for Scheduler<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Scheduler<T> {
    pub fn new() -> Self {
        Scheduler {
            now: T::zero(),
            next_seq: 0,
            heap: BinaryHeap::new(),
            work: 0,
        }
    }

    pub fn now(&self) -> T {
        self.now
    }

    pub fn schedule(&mut self, at: T, payload: Payload<T>) -> Result<u64, ScheduleError> {
        if !at.is_finite() {
            return Err(ScheduleError::NotFinite(at.as_f64()));
        }
        if at < self.now {
            return Err(ScheduleError::TimeInPast {
                at: at.as_f64(),
                now: self.now.as_f64(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        if !payload.is_background() {
            self.work += 1;
        }
        self.heap.push(Entry(Event {
            time: SimTime(at),
            seq,
            payload,
        }));
        Ok(seq)
    }

    pub fn pop(&mut self) -> Option<Event<T>> {
        let Entry(ev) = self.heap.pop()?;
        self.now = ev.time.0;
        if !ev.payload.is_background() {
            self.work -= 1;
        }
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<T> {
        self.heap.peek().map(|e| e.0.time.0)
    }

    /// Queued events that are not background ticks.
    pub fn pending_work(&self) -> usize {
        self.work
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
