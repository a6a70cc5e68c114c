//! Overlay topology: reachable and unreachable nodes, direction-aware links,
//! subnet buckets and adversary placement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryConfig;
use crate::scalar::Real;
use crate::sim::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Emulated subnet group of a node's address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BucketId(pub u16);

impl fmt::Display for BucketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`Topology::links`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl LinkId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reachability {
    Reachable,
    Unreachable,
}

impl Reachability {
    pub fn token(self) -> &'static str {
        match self {
            Reachability::Reachable => "R",
            Reachability::Unreachable => "U",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Honest,
    AdversaryReachable,
    AdversaryUnreachable,
}

impl Role {
    pub fn is_adversarial(self) -> bool {
        !matches!(self, Role::Honest)
    }

    pub fn token(self) -> &'static str {
        match self {
            Role::Honest => "honest",
            Role::AdversaryReachable => "adv_reachable",
            Role::AdversaryUnreachable => "adv_unreachable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub reachability: Reachability,
    pub bucket: BucketId,
    pub role: Role,
}

impl NodeRecord {
    pub fn is_reachable(&self) -> bool {
        self.reachability == Reachability::Reachable
    }

    pub fn is_honest(&self) -> bool {
        self.role == Role::Honest
    }
}

/// A connection opened by `initiator` and accepted by `acceptor`.
///
/// Once established, messages flow both ways; the direction only matters for
/// who counts as an outbound peer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link<T> {
    pub initiator: NodeId,
    pub acceptor: NodeId,
    pub latency_mean: T,
}

impl<T: Copy> Link<T> {
    /// The endpoint opposite `node`, if `node` is an endpoint.
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if self.initiator == node {
            Some(self.acceptor)
        } else if self.acceptor == node {
            Some(self.initiator)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology<T> {
    pub nodes: Vec<NodeRecord>,
    pub links: Vec<Link<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeerClass {
    ReachablePeers,
    UnreachablePeers,
}

impl PeerClass {
    fn matches(self, r: Reachability) -> bool {
        matches!(
            (self, r),
            (PeerClass::ReachablePeers, Reachability::Reachable)
                | (PeerClass::UnreachablePeers, Reachability::Unreachable)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyConfig {
    pub num_reachable: usize,
    pub num_unreachable: usize,
    pub u_outbound: usize,
    pub r_outbound: usize,
    pub num_buckets: usize,
    pub max_connections: usize,
    pub latency_min: f64,
    pub latency_max: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            num_reachable: 200,
            num_unreachable: 2000,
            u_outbound: 8,
            r_outbound: 8,
            num_buckets: 16,
            max_connections: 125,
            latency_min: 0.05,
            latency_max: 0.3,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("bad topology config: {0}")]
    BadConfig(String),
    #[error("infeasible degrees: {0}")]
    InfeasibleDegrees(String),
    #[error("connection capacity exceeded at node {node}")]
    CapacityExceeded { node: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("topology line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology invariant violated: {0}")]
    Invariant(String),
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.num_reachable == 0 {
            return Err(NetError::BadConfig("num_r must be positive".into()));
        }
        if self.num_buckets == 0 || self.num_buckets > u16::MAX as usize {
            return Err(NetError::BadConfig("num_buckets out of range".into()));
        }
        if !(self.latency_min > 0.0 && self.latency_max >= self.latency_min) || !self.latency_max.is_finite() {
            return Err(NetError::BadConfig(format!(
                "latency range [{}, {}] must be positive and ordered",
                self.latency_min, self.latency_max
            )));
        }
        if self.r_outbound >= self.num_reachable && self.r_outbound > 0 {
            return Err(NetError::InfeasibleDegrees(format!(
                "r_outbound {} needs more than {} reachable nodes",
                self.r_outbound, self.num_reachable
            )));
        }
        if self.u_outbound > self.num_reachable {
            return Err(NetError::InfeasibleDegrees(format!(
                "u_outbound {} exceeds {} reachable nodes",
                self.u_outbound, self.num_reachable
            )));
        }
        let demand = 2 * self.num_reachable * self.r_outbound + self.num_unreachable * self.u_outbound;
        let supply = self.num_reachable * self.max_connections;
        if demand > supply {
            return Err(NetError::InfeasibleDegrees(format!(
                "{demand} connection endpoints needed at reachable nodes, capacity is {supply}"
            )));
        }
        Ok(())
    }

    fn sample_latency<T: Real>(&self, rng: &mut SeededRng) -> T {
        let u: f64 = rng.gen();
        T::lit(self.latency_min + (self.latency_max - self.latency_min) * u)
    }
}

/// Builds the honest overlay: reachable nodes take ids `0..num_r`, unreachable
/// nodes follow. Buckets are assigned round-robin by id.
pub fn build_topology<T: Real>(config: &TopologyConfig, rng: &mut SeededRng) -> Result<Topology<T>, NetError> {
    config.validate()?;
    let num_r = config.num_reachable;
    let total = num_r + config.num_unreachable;
    let nodes: Vec<NodeRecord> = (0..total)
        .map(|i| NodeRecord {
            id: NodeId(i as u32),
            reachability: if i < num_r {
                Reachability::Reachable
            } else {
                Reachability::Unreachable
            },
            bucket: BucketId((i % config.num_buckets) as u16),
            role: Role::Honest,
        })
        .collect();

    let mut degree = vec![0usize; num_r];
    let mut links = Vec::with_capacity(num_r * config.r_outbound + total * config.u_outbound);

    for i in 0..num_r {
        if degree[i] + config.r_outbound > config.max_connections {
            return Err(NetError::InfeasibleDegrees(format!(
                "reachable node {i} has no room for its outbound links"
            )));
        }
        let candidates: Vec<usize> = (0..num_r)
            .filter(|&j| j != i && degree[j] < config.max_connections)
            .collect();
        if candidates.len() < config.r_outbound {
            return Err(NetError::InfeasibleDegrees(format!(
                "reachable node {i} found {} acceptors, needs {}",
                candidates.len(),
                config.r_outbound
            )));
        }
        for pick in index::sample(rng, candidates.len(), config.r_outbound) {
            let j = candidates[pick];
            degree[i] += 1;
            degree[j] += 1;
            links.push(Link {
                initiator: NodeId(i as u32),
                acceptor: NodeId(j as u32),
                latency_mean: config.sample_latency(rng),
            });
        }
    }

    for u in num_r..total {
        let candidates: Vec<usize> = (0..num_r).filter(|&j| degree[j] < config.max_connections).collect();
        if candidates.len() < config.u_outbound {
            return Err(NetError::InfeasibleDegrees(format!(
                "unreachable node {u} found {} acceptors, needs {}",
                candidates.len(),
                config.u_outbound
            )));
        }
        for pick in index::sample(rng, candidates.len(), config.u_outbound) {
            let j = candidates[pick];
            degree[j] += 1;
            links.push(Link {
                initiator: NodeId(u as u32),
                acceptor: NodeId(j as u32),
                latency_mean: config.sample_latency(rng),
            });
        }
    }

    Ok(Topology { nodes, links })
}

/// Adds adversarial nodes and links to an honest topology.
///
/// Spy (reachable) nodes open `connections_per_honest_r` links to every honest
/// reachable node. Each honest unreachable link is retargeted to a spy with
/// probability `spies / (honest_r + spies)`, which is what uniform selection over
/// all reachable nodes would have produced. Adversarial unreachable nodes open
/// `u_outbound` links like honest ones.
pub fn deploy_adversary<T: Real>(
    topology: &Topology<T>,
    limits: &TopologyConfig,
    adv: &AdversaryConfig,
    rng: &mut SeededRng,
) -> Result<Topology<T>, NetError> {
    if !adv.enabled {
        return Ok(topology.clone());
    }
    adv.validate().map_err(NetError::BadConfig)?;

    let mut out = topology.clone();
    let honest_r: Vec<NodeId> = out
        .nodes
        .iter()
        .filter(|n| n.is_honest() && n.is_reachable())
        .map(|n| n.id)
        .collect();
    let mut degree = vec![0usize; out.nodes.len()];
    for l in &out.links {
        degree[l.initiator.idx()] += 1;
        degree[l.acceptor.idx()] += 1;
    }

    let base = out.nodes.len();
    let num_adv = adv.num_spy_r + adv.num_adv_u;
    for k in 0..num_adv {
        let (reachability, role) = if k < adv.num_spy_r {
            (Reachability::Reachable, Role::AdversaryReachable)
        } else {
            (Reachability::Unreachable, Role::AdversaryUnreachable)
        };
        out.nodes.push(NodeRecord {
            id: NodeId((base + k) as u32),
            reachability,
            bucket: BucketId((k % adv.bucket_span) as u16),
            role,
        });
        degree.push(0);
    }
    let spies: Vec<NodeId> = (base..base + adv.num_spy_r).map(|i| NodeId(i as u32)).collect();

    for &spy in &spies {
        for &r in &honest_r {
            for _ in 0..adv.connections_per_honest_r {
                degree[r.idx()] += 1;
                degree[spy.idx()] += 1;
                if degree[r.idx()] > limits.max_connections {
                    return Err(NetError::CapacityExceeded { node: r });
                }
                out.links.push(Link {
                    initiator: spy,
                    acceptor: r,
                    latency_mean: limits.sample_latency(rng),
                });
            }
        }
    }

    if !spies.is_empty() {
        let share = spies.len() as f64 / (honest_r.len() + spies.len()) as f64;
        let honest_u: Vec<NodeId> = out
            .nodes
            .iter()
            .filter(|n| n.is_honest() && !n.is_reachable())
            .map(|n| n.id)
            .collect();
        let mut links_of: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, l) in out.links.iter().enumerate() {
            links_of.entry(l.initiator).or_default().push(i);
        }
        for u in honest_u {
            let own = links_of.get(&u).cloned().unwrap_or_default();
            for li in own {
                if rng.gen::<f64>() >= share {
                    continue;
                }
                let taken: BTreeSet<NodeId> = out
                    .links
                    .iter()
                    .filter(|l| l.initiator == u)
                    .map(|l| l.acceptor)
                    .collect();
                let free: Vec<NodeId> = spies.iter().copied().filter(|s| !taken.contains(s)).collect();
                if free.is_empty() {
                    continue;
                }
                let spy = free[rng.gen_range(0..free.len())];
                degree[out.links[li].acceptor.idx()] -= 1;
                degree[spy.idx()] += 1;
                out.links[li].acceptor = spy;
            }
        }
    }

    let target = match adv.target_node {
        Some(t) => {
            let rec = out.nodes.get(t.idx()).ok_or(NetError::UnknownNode(t))?;
            if !(rec.is_honest() && rec.is_reachable()) {
                return Err(NetError::BadConfig(format!(
                    "adversary target {t} must be an honest reachable node"
                )));
            }
            Some(t)
        }
        None => None,
    };
    for k in adv.num_spy_r..num_adv {
        let me = NodeId((base + k) as u32);
        let mut chosen = Vec::with_capacity(limits.u_outbound);
        if let Some(t) = target {
            if limits.u_outbound > 0 {
                if degree[t.idx()] >= limits.max_connections {
                    return Err(NetError::CapacityExceeded { node: t });
                }
                chosen.push(t);
            }
        }
        let candidates: Vec<NodeId> = honest_r
            .iter()
            .copied()
            .filter(|r| degree[r.idx()] < limits.max_connections && Some(*r) != target)
            .chain(spies.iter().copied())
            .collect();
        let need = limits.u_outbound - chosen.len();
        if candidates.len() < need {
            return Err(NetError::CapacityExceeded {
                node: honest_r.first().copied().unwrap_or(me),
            });
        }
        chosen.extend(
            index::sample(rng, candidates.len(), need)
                .into_iter()
                .map(|i| candidates[i]),
        );
        for acceptor in chosen {
            degree[acceptor.idx()] += 1;
            degree[me.idx()] += 1;
            out.links.push(Link {
                initiator: me,
                acceptor,
                latency_mean: limits.sample_latency(rng),
            });
        }
    }

    Ok(out)
}

/// Groups a node's distinct peers of one reachability class by bucket.
/// Peers inside a bucket are sorted by id.
pub fn peers_by_bucket<T: Real>(
    topology: &Topology<T>,
    node: NodeId,
    class: PeerClass,
) -> Result<BTreeMap<BucketId, Vec<NodeId>>, NetError> {
    if node.idx() >= topology.nodes.len() {
        return Err(NetError::UnknownNode(node));
    }
    let peers: BTreeSet<NodeId> = topology
        .links
        .iter()
        .filter_map(|l| l.other(node))
        .filter(|p| class.matches(topology.nodes[p.idx()].reachability))
        .collect();
    let mut out: BTreeMap<BucketId, Vec<NodeId>> = BTreeMap::new();
    for p in peers {
        out.entry(topology.nodes[p.idx()].bucket).or_default().push(p);
    }
    Ok(out)
}

impl<T: Real> Topology<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(id.idx())
    }

    pub fn honest_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_honest()).count()
    }

    /// Total links incident to each node (parallel links counted separately).
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for l in &self.links {
            d[l.initiator.idx()] += 1;
            d[l.acceptor.idx()] += 1;
        }
        d
    }

    /// Structural checks that hold for every topology regardless of config:
    /// dense ids, known endpoints, the direction law and the parallel-link rule.
    pub fn validate(&self) -> Result<(), NetError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.idx() != i {
                return Err(NetError::Invariant(format!("node at position {i} has id {}", n.id)));
            }
            let adversarial_role = matches!(n.role, Role::AdversaryReachable | Role::AdversaryUnreachable);
            let role_class_ok = match n.role {
                Role::AdversaryReachable => n.is_reachable(),
                Role::AdversaryUnreachable => !n.is_reachable(),
                Role::Honest => true,
            };
            if adversarial_role && !role_class_ok {
                return Err(NetError::Invariant(format!(
                    "node {i} role does not match its reachability"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for l in &self.links {
            let (Some(a), Some(b)) = (self.node(l.initiator), self.node(l.acceptor)) else {
                return Err(NetError::Invariant(format!(
                    "link {}->{} references a missing node",
                    l.initiator, l.acceptor
                )));
            };
            if l.initiator == l.acceptor {
                return Err(NetError::Invariant(format!("self link at {}", l.initiator)));
            }
            if !b.is_reachable() {
                return Err(NetError::Invariant(format!(
                    "link {}->{} accepted by an unreachable node",
                    l.initiator, l.acceptor
                )));
            }
            if !(l.latency_mean > T::zero()) {
                return Err(NetError::Invariant(format!(
                    "link {}->{} has non-positive latency",
                    l.initiator, l.acceptor
                )));
            }
            if !seen.insert((l.initiator, l.acceptor)) && a.is_honest() {
                return Err(NetError::Invariant(format!(
                    "parallel honest link {}->{}",
                    l.initiator, l.acceptor
                )));
            }
        }
        Ok(())
    }

    /// Line-oriented dump: `node <id> <R|U> <bucket> <role>` then
    /// `link <initiator> <acceptor> <latency_mean>`.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "node {} {} {} {}",
                n.id,
                n.reachability.token(),
                n.bucket,
                n.role.token()
            );
        }
        for l in &self.links {
            let _ = writeln!(s, "link {} {} {}", l.initiator, l.acceptor, l.latency_mean);
        }
        s
    }

    /// Parses the format written by [`Topology::to_text`]. Blank lines and `#`
    /// comments are skipped. The result is validated.
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| NetError::Parse { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["node", id, class, bucket, role] => {
                    let id: u32 = id.parse().map_err(|_| err(format!("bad node id `{id}`")))?;
                    let reachability = match *class {
                        "R" => Reachability::Reachable,
                        "U" => Reachability::Unreachable,
                        other => return Err(err(format!("bad reachability `{other}`"))),
                    };
                    let bucket: u16 = bucket.parse().map_err(|_| err(format!("bad bucket `{bucket}`")))?;
                    let role = match *role {
                        "honest" => Role::Honest,
                        "adv_reachable" => Role::AdversaryReachable,
                        "adv_unreachable" => Role::AdversaryUnreachable,
                        other => return Err(err(format!("bad role `{other}`"))),
                    };
                    nodes.push(NodeRecord {
                        id: NodeId(id),
                        reachability,
                        bucket: BucketId(bucket),
                        role,
                    });
                }
                ["link", a, b, lat] => {
                    let a: u32 = a.parse().map_err(|_| err(format!("bad initiator `{a}`")))?;
                    let b: u32 = b.parse().map_err(|_| err(format!("bad acceptor `{b}`")))?;
                    let lat: T = lat.parse().map_err(|_| err(format!("bad latency `{lat}`")))?;
                    links.push(Link {
                        initiator: NodeId(a),
                        acceptor: NodeId(b),
                        latency_mean: lat,
                    });
                }
                _ => return Err(err(format!("unrecognised line `{line}`"))),
            }
        }
        let topo = Topology { nodes, links };
        topo.validate()?;
        Ok(topo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(num_r: usize, num_u: usize, u_out: usize, r_out: usize) -> TopologyConfig {
        TopologyConfig {
            num_reachable: num_r,
            num_unreachable: num_u,
            u_outbound: u_out,
            r_outbound: r_out,
            ..TopologyConfig::default()
        }
    }

    #[test]
    fn ten_to_one_link_counts() {
        let c = cfg(10, 100, 8, 8);
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(1)).unwrap();
        t.validate().unwrap();
        let u_links = t
            .links
            .iter()
            .filter(|l| !t.nodes[l.initiator.idx()].is_reachable())
            .count();
        let r_links = t.links.len() - u_links;
        assert_eq!(u_links, 800);
        assert_eq!(r_links, 80);
        assert!(t.links.iter().all(|l| t.nodes[l.acceptor.idx()].is_reachable()));
        assert!(t.degrees()[..10].iter().all(|&d| d <= 125));
    }

    #[test]
    fn single_isolated_node() {
        let t: Topology<f64> = build_topology(&cfg(1, 0, 0, 0), &mut SeededRng::new(0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(t.links.is_empty());
    }

    #[test]
    fn zero_reachable_is_bad_config() {
        let e = build_topology::<f64>(&cfg(0, 5, 1, 0), &mut SeededRng::new(0)).unwrap_err();
        assert!(matches!(e, NetError::BadConfig(_)));
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let mut c = cfg(2, 100, 2, 1);
        c.max_connections = 10;
        let e = build_topology::<f64>(&c, &mut SeededRng::new(0)).unwrap_err();
        assert!(matches!(e, NetError::InfeasibleDegrees(_)));
        let e = build_topology::<f64>(&cfg(3, 0, 0, 3), &mut SeededRng::new(0)).unwrap_err();
        assert!(matches!(e, NetError::InfeasibleDegrees(_)));
    }

    #[test]
    fn buckets_round_robin() {
        let mut c = cfg(5, 5, 2, 1);
        c.num_buckets = 3;
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(2)).unwrap();
        let b: Vec<u16> = t.nodes.iter().map(|n| n.bucket.0).collect();
        assert_eq!(b, vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn partition_example() {
        // node 0 (R) with U peers a=1:b0, b=2:b0, c=3:b1
        let mk = |id, r, b| NodeRecord {
            id: NodeId(id),
            reachability: r,
            bucket: BucketId(b),
            role: Role::Honest,
        };
        let t = Topology {
            nodes: vec![
                mk(0, Reachability::Reachable, 0),
                mk(1, Reachability::Unreachable, 0),
                mk(2, Reachability::Unreachable, 0),
                mk(3, Reachability::Unreachable, 1),
            ],
            links: [3u32, 1, 2]
                .iter()
                .map(|&u| Link {
                    initiator: NodeId(u),
                    acceptor: NodeId(0),
                    latency_mean: 0.1f64,
                })
                .collect(),
        };
        let m = peers_by_bucket(&t, NodeId(0), PeerClass::UnreachablePeers).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[&BucketId(0)], vec![NodeId(1), NodeId(2)]);
        assert_eq!(m[&BucketId(1)], vec![NodeId(3)]);
        assert!(peers_by_bucket(&t, NodeId(0), PeerClass::ReachablePeers)
            .unwrap()
            .is_empty());
        assert_eq!(
            peers_by_bucket(&t, NodeId(9), PeerClass::ReachablePeers).unwrap_err(),
            NetError::UnknownNode(NodeId(9))
        );
    }

    #[test]
    fn adversary_disabled_is_identity() {
        let c = cfg(10, 50, 4, 3);
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(5)).unwrap();
        let adv = AdversaryConfig::default();
        assert!(!adv.enabled);
        let t2 = deploy_adversary(&t, &c, &adv, &mut SeededRng::new(6)).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn spy_link_counts() {
        let c = cfg(10, 50, 4, 3);
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(5)).unwrap();
        let adv = AdversaryConfig {
            enabled: true,
            num_spy_r: 1,
            connections_per_honest_r: 2,
            ..AdversaryConfig::default()
        };
        let t2 = deploy_adversary(&t, &c, &adv, &mut SeededRng::new(6)).unwrap();
        t2.validate().unwrap();
        let spy = NodeId(60);
        assert_eq!(t2.nodes[60].role, Role::AdversaryReachable);
        let spy_links: Vec<_> = t2.links.iter().filter(|l| l.initiator == spy).collect();
        assert_eq!(spy_links.len(), 20);
        assert!(spy_links
            .iter()
            .all(|l| t2.nodes[l.acceptor.idx()].is_honest() && t2.nodes[l.acceptor.idx()].is_reachable()));
    }

    #[test]
    fn spy_capacity_overflow() {
        let mut c = cfg(4, 20, 2, 1);
        c.max_connections = 14;
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(5)).unwrap();
        let adv = AdversaryConfig {
            enabled: true,
            num_spy_r: 1,
            connections_per_honest_r: 10,
            ..AdversaryConfig::default()
        };
        let e = deploy_adversary(&t, &c, &adv, &mut SeededRng::new(6)).unwrap_err();
        assert!(matches!(e, NetError::CapacityExceeded { .. }));
    }

    #[test]
    fn text_roundtrip_and_rejects() {
        let c = cfg(6, 20, 3, 2);
        let t: Topology<f64> = build_topology(&c, &mut SeededRng::new(9)).unwrap();
        let back = Topology::<f64>::parse(&t.to_text()).unwrap();
        assert_eq!(t, back);
        let bad = "node 0 R 0 honest\nnode 1 U 0 honest\nlink 0 1 0.1\n";
        assert!(matches!(Topology::<f64>::parse(bad), Err(NetError::Invariant(_))));
        let bad = "node 0 R 0 honest\nfoo\n";
        assert_eq!(
            Topology::<f64>::parse(bad).unwrap_err(),
            NetError::Parse {
                line: 2,
                msg: "unrecognised line `foo`".into()
            }
        );
    }
}
