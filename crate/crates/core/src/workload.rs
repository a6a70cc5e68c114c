//! Transaction workloads: Poisson arrivals with origins drawn from a pool of
//! honest nodes.

use rand::Rng;

use crate::net::{NodeId, Topology};
use crate::protocols::{Transaction, TxId};
use crate::scalar::Real;
use crate::sim::{sample_exponential, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OriginPool {
    /// Honest reachable nodes.
    Reachable,
    /// Honest unreachable nodes.
    Unreachable,
    /// Every honest node.
    Honest,
}

impl std::str::FromStr for OriginPool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reachable" => Ok(OriginPool::Reachable),
            "unreachable" => Ok(OriginPool::Unreachable),
            "honest" => Ok(OriginPool::Honest),
            other => Err(format!(
                "unknown origin pool `{other}` (expected reachable, unreachable or honest)"
            )),
        }
    }
}

impl OriginPool {
    pub fn token(self) -> &'static str {
        match self {
            OriginPool::Reachable => "reachable",
            OriginPool::Unreachable => "unreachable",
            OriginPool::Honest => "honest",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub num_txs: usize,
    /// Transactions created per simulated second, network wide.
    pub creation_rate: f64,
    pub origins: OriginPool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            num_txs: 200,
            creation_rate: 1.0,
            origins: OriginPool::Reachable,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Workload<T> {
    pub txs: Vec<Transaction<T>>,
}

impl<T: Real> Workload<T> {
    pub fn empty() -> Self {
        Workload { txs: Vec::new() }
    }

    pub fn generate(cfg: &WorkloadConfig, topology: &Topology<T>, rng: &mut SeededRng) -> Result<Self, String> {
        if cfg.num_txs == 0 {
            return Ok(Self::empty());
        }
        if !(cfg.creation_rate > 0.0) {
            return Err(format!("creation_rate must be positive, got {}", cfg.creation_rate));
        }
        let pool: Vec<NodeId> = topology
            .nodes
            .iter()
            .filter(|n| {
                n.is_honest()
                    && match cfg.origins {
                        OriginPool::Reachable => n.is_reachable(),
                        OriginPool::Unreachable => !n.is_reachable(),
                        OriginPool::Honest => true,
                    }
            })
            .map(|n| n.id)
            .collect();
        if pool.is_empty() {
            return Err(format!("no {} origins available", cfg.origins.token()));
        }
        let rate = T::lit(cfg.creation_rate);
        let mut t = T::zero();
        let mut txs = Vec::with_capacity(cfg.num_txs);
        for i in 0..cfg.num_txs {
            t = t + sample_exponential(rng, rate).map_err(|e| e.to_string())?;
            txs.push(Transaction {
                txid: TxId(i as u64),
                origin: pool[rng.gen_range(0..pool.len())],
                created_at: t,
            });
        }
        Ok(Workload { txs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_topology, TopologyConfig};

    #[test]
    fn arrivals_increase_and_origins_match_pool() {
        let c = TopologyConfig {
            num_reachable: 5,
            num_unreachable: 20,
            u_outbound: 2,
            r_outbound: 2,
            ..TopologyConfig::default()
        };
        let topo: Topology<f64> = build_topology(&c, &mut SeededRng::new(1)).unwrap();
        let w = Workload::generate(
            &WorkloadConfig {
                num_txs: 50,
                creation_rate: 2.0,
                origins: OriginPool::Unreachable,
            },
            &topo,
            &mut SeededRng::new(2),
        )
        .unwrap();
        assert_eq!(w.txs.len(), 50);
        assert!(w.txs.windows(2).all(|p| p[0].created_at < p[1].created_at));
        assert!(w.txs.iter().all(|t| t.origin.0 >= 5));
    }
}
