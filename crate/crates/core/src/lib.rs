//! Discrete-event simulator for transaction propagation over a P2P overlay of
//! reachable and unreachable nodes.
//!
//! Two propagation modes are modeled: plain diffusion, where every node
//! announces to each neighbor after an independent exponential delay, and
//! proxied broadcast, where new transactions first travel point to point
//! between reachable and unreachable nodes before being diffused. An
//! eavesdropping adversary connected to every reachable node pools what it
//! hears and runs the first-spy estimator against both.
//!
//! Core types are generic over the time scalar ([`Real`], `f32` or `f64`);
//! the aliases at the crate root fix it to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod net;
pub mod protocols;
pub mod scalar;
pub mod sim;
pub mod workload;

pub use adversary::{AdversaryConfig, Behavior};
pub use config::{ConfigError, ExperimentConfig};
pub use metrics::RunMetrics;
pub use net::{NodeId, TopologyConfig};
pub use protocols::{Mode, TxId};
pub use scalar::Real;
pub use sim::SeededRng;
pub use workload::{OriginPool, WorkloadConfig};

pub type Topology = net::Topology<f64>;
pub type Link = net::Link<f64>;
pub type ProtocolParams = protocols::ProtocolParams<f64>;
pub type Transaction = protocols::Transaction<f64>;
pub type Workload = workload::Workload<f64>;
pub type TraceRecord = sim::TraceRecord<f64>;
pub type Observation = adversary::Observation<f64>;
pub type ObservationLog = adversary::ObservationLog<f64>;
pub type FirstSpyReport = adversary::FirstSpyReport<f64>;
pub type RunOutput = sim::RunOutput<f64>;
pub type AddrGossip = sim::AddrGossip<f64>;
