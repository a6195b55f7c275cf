//! Directed device graph: Barabási–Albert generation, Poisson churn with
//! preferential reattachment, and edge/device removal.
//!
//! The graph owns node status flags (online, attacker-owned, domain
//! controller) because churn and the attacker-owned reconnection invariant
//! depend on them; the environment mirrors these flags into device states.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DeviceId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("need at least attach_m + 1 = {need} nodes, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error("edge list references node {0} outside the graph")]
    NodeOutOfRange(usize),
    #[error("malformed edge list line {0}: expected `i j`")]
    BadEdgeLine(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub online: bool,
    pub attacker_owned: bool,
    pub domain_controller: bool,
}

impl Default for NodeInfo {
    fn default() -> Self {
        NodeInfo {
            online: false,
            attacker_owned: false,
            domain_controller: false,
        }
    }
}

/// Poisson churn parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChurnConfig {
    /// Mean number of churn events per step.
    pub lambda: f64,
    /// Probability that an event is an addition (else a removal).
    pub p_add: f64,
    /// Probability that a newly activated node is attacker-owned.
    pub p_att: f64,
    /// Edges added by preferential attachment when activating an isolated node.
    pub attach_m: usize,
    /// Online-node floor that removals must respect.
    pub min_size: usize,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        ChurnConfig {
            lambda: 0.7,
            p_add: 0.4,
            p_att: 0.1,
            attach_m: 2,
            min_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChurnEvent {
    Added { node: DeviceId, attacker_owned: bool },
    Removed { node: DeviceId },
    AdditionSkippedEmptyPool,
    RemovalSkippedMinSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    nodes: Vec<NodeInfo>,
    out_edges: Vec<BTreeSet<DeviceId>>,
    in_edges: Vec<BTreeSet<DeviceId>>,
}

impl NetworkGraph {
    /// An empty graph with `n` offline node slots.
    pub fn with_slots(n: usize) -> Self {
        NetworkGraph {
            nodes: vec![NodeInfo::default(); n],
            out_edges: vec![BTreeSet::new(); n],
            in_edges: vec![BTreeSet::new(); n],
        }
    }

    /// Connected directed Barabási–Albert graph over `n` online nodes.
    ///
    /// Seed: a complete digraph over the first `attach_m + 1` nodes. Each
    /// later node adds `attach_m` out-edges to degree-weighted targets plus
    /// one in-edge from its first target, so every node is reachable both
    /// ways.
    pub fn generate_initial(n: usize, attach_m: usize, rng: &mut ChaCha8Rng) -> Result<Self, GraphError> {
        if n < attach_m + 1 {
            return Err(GraphError::TooSmall { need: attach_m + 1, got: n });
        }
        let mut g = NetworkGraph::with_slots(n);
        for i in 0..n {
            g.nodes[i].online = true;
        }
        g.seed_clique(attach_m + 1);
        for i in attach_m + 1..n {
            g.ba_attach(i, attach_m, rng);
        }
        Ok(g)
    }

    /// Complete digraph over nodes `0..k`.
    pub fn seed_clique(&mut self, k: usize) {
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    self.add_edge(i, j);
                }
            }
        }
    }

    /// Attach `node` with `m` out-edges to degree-weighted online targets
    /// (without replacement) plus one in-edge from the first target.
    pub fn ba_attach(&mut self, node: DeviceId, m: usize, rng: &mut ChaCha8Rng) {
        let mut chosen: Vec<DeviceId> = Vec::with_capacity(m);
        for _ in 0..m {
            let candidates: Vec<DeviceId> = (0..self.nodes.len())
                .filter(|&i| i != node && self.nodes[i].online && !chosen.contains(&i))
                .collect();
            if candidates.is_empty() {
                break;
            }
            // degree + 1 smoothing so isolated online nodes stay reachable targets
            let weights: Vec<u64> = candidates.iter().map(|&i| self.degree(i) as u64 + 1).collect();
            let total: u64 = weights.iter().sum();
            let mut roll = rng.gen_range(0..total);
            let mut pick = candidates[0];
            for (c, w) in candidates.iter().zip(&weights) {
                if roll < *w {
                    pick = *c;
                    break;
                }
                roll -= w;
            }
            chosen.push(pick);
        }
        for (k, &t) in chosen.iter().enumerate() {
            self.add_edge(node, t);
            if k == 0 {
                self.add_edge(t, node);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: DeviceId) -> &NodeInfo {
        &self.nodes[i]
    }

    pub fn node_mut(&mut self, i: DeviceId) -> &mut NodeInfo {
        &mut self.nodes[i]
    }

    pub fn online_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.online).count()
    }

    pub fn online_nodes(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.online).map(|(i, _)| i)
    }

    pub fn attacker_owned_nodes(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.attacker_owned)
            .map(|(i, _)| i)
    }

    pub fn add_edge(&mut self, i: DeviceId, j: DeviceId) -> bool {
        if i == j {
            return false;
        }
        let added = self.out_edges[i].insert(j);
        self.in_edges[j].insert(i);
        added
    }

    /// Removes an edge. Returns false (caller logs a warning) if absent.
    pub fn remove_edge(&mut self, i: DeviceId, j: DeviceId) -> bool {
        let existed = self.out_edges[i].remove(&j);
        self.in_edges[j].remove(&i);
        existed
    }

    /// Marks a device offline. Attacker-owned nodes cannot be removed; the
    /// compromise record of removed nodes is kept by the caller.
    pub fn remove_device(&mut self, i: DeviceId) -> bool {
        if self.nodes[i].attacker_owned || !self.nodes[i].online {
            return false;
        }
        self.nodes[i].online = false;
        true
    }

    pub fn has_edge(&self, i: DeviceId, j: DeviceId) -> bool {
        self.out_edges[i].contains(&j)
    }

    pub fn out_neighbors(&self, i: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        self.out_edges[i].iter().copied()
    }

    pub fn in_neighbors(&self, i: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        self.in_edges[i].iter().copied()
    }

    pub fn degree(&self, i: DeviceId) -> usize {
        self.out_edges[i].len() + self.in_edges[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(|s| s.len()).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (DeviceId, DeviceId)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
    }

    /// Applies `K ~ Poisson(lambda)` churn events. Additions draw uniformly
    /// from `offline_pool` (skipped if exhausted); isolated newcomers attach
    /// preferentially. Removals pick a uniform online node that is neither
    /// attacker-owned nor a domain controller, respecting `min_size`.
    /// Attacker-owned nodes are reconnected afterwards.
    pub fn evolve(
        &mut self,
        cfg: &ChurnConfig,
        offline_pool: &[DeviceId],
        rng: &mut ChaCha8Rng,
    ) -> Vec<ChurnEvent> {
        let mut events = Vec::new();
        let k = if cfg.lambda > 0.0 {
            Poisson::new(cfg.lambda).expect("lambda > 0").sample(rng) as u64
        } else {
            0
        };
        let mut pool: Vec<DeviceId> = offline_pool
            .iter()
            .copied()
            .filter(|&i| !self.nodes[i].online && !self.nodes[i].attacker_owned)
            .collect();
        for _ in 0..k {
            if rng.gen::<f64>() < cfg.p_add {
                if pool.is_empty() {
                    events.push(ChurnEvent::AdditionSkippedEmptyPool);
                    continue;
                }
                let idx = rng.gen_range(0..pool.len());
                let node = pool.swap_remove(idx);
                self.nodes[node].online = true;
                let attacker_owned = rng.gen::<f64>() < cfg.p_att;
                if attacker_owned {
                    self.nodes[node].attacker_owned = true;
                }
                if self.degree(node) == 0 {
                    self.ba_attach(node, cfg.attach_m, rng);
                }
                events.push(ChurnEvent::Added { node, attacker_owned });
            } else {
                if self.online_count() <= cfg.min_size {
                    events.push(ChurnEvent::RemovalSkippedMinSize);
                    continue;
                }
                let candidates: Vec<DeviceId> = (0..self.nodes.len())
                    .filter(|&i| {
                        self.nodes[i].online
                            && !self.nodes[i].attacker_owned
                            && !self.nodes[i].domain_controller
                    })
                    .collect();
                if candidates.is_empty() {
                    events.push(ChurnEvent::RemovalSkippedMinSize);
                    continue;
                }
                let node = candidates[rng.gen_range(0..candidates.len())];
                self.nodes[node].online = false;
                events.push(ChurnEvent::Removed { node });
            }
        }
        self.reconnect_attacker_owned();
        events
    }

    /// Re-establishes pairwise edges among attacker-owned nodes so they stay
    /// mutually reachable.
    pub fn reconnect_attacker_owned(&mut self) {
        let owned: Vec<DeviceId> = self.attacker_owned_nodes().collect();
        for &i in &owned {
            self.nodes[i].online = true;
            for &j in &owned {
                if i != j {
                    self.add_edge(i, j);
                }
            }
        }
    }

    /// Nodes reachable from `start` along directed edges (online nodes only).
    pub fn reachable_from(&self, start: DeviceId) -> BTreeSet<DeviceId> {
        let mut seen = BTreeSet::new();
        if !self.nodes[start].online {
            return seen;
        }
        let mut queue = vec![start];
        seen.insert(start);
        while let Some(i) = queue.pop() {
            for j in self.out_neighbors(i) {
                if self.nodes[j].online && seen.insert(j) {
                    queue.push(j);
                }
            }
        }
        seen
    }

    /// Independent BFS oracle: every attacker-owned node reaches every other.
    pub fn attacker_owned_mutually_reachable(&self) -> bool {
        let owned: Vec<DeviceId> = self.attacker_owned_nodes().collect();
        for &i in &owned {
            let r = self.reachable_from(i);
            if owned.iter().any(|j| !r.contains(j)) {
                return false;
            }
        }
        true
    }

    /// Parse an exogenous topology from edge-list text, one `i j` pair per
    /// line. Lines starting with `#` and blank lines are skipped. All
    /// referenced nodes are marked online.
    pub fn from_edge_list(text: &str, slots: usize) -> Result<Self, GraphError> {
        let mut g = NetworkGraph::with_slots(slots);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (i, j) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let i: usize = a.parse().map_err(|_| GraphError::BadEdgeLine(lineno + 1))?;
                    let j: usize = b.parse().map_err(|_| GraphError::BadEdgeLine(lineno + 1))?;
                    (i, j)
                }
                _ => return Err(GraphError::BadEdgeLine(lineno + 1)),
            };
            if i >= slots || j >= slots {
                return Err(GraphError::NodeOutOfRange(i.max(j)));
            }
            g.nodes[i].online = true;
            g.nodes[j].online = true;
            g.add_edge(i, j);
        }
        Ok(g)
    }

    /// Total-degree histogram of online nodes.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
        for i in self.online_nodes() {
            *counts.entry(self.degree(i)).or_default() += 1;
        }
        counts.into_iter().collect()
    }
}

/// Least-squares slope of `ln(count)` against `ln(degree)` over pooled degree
/// histograms; the heavy-tail diagnostic used by the topology checks.
pub fn log_log_degree_slope(graphs: &[&NetworkGraph]) -> f64 {
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for g in graphs {
        for (d, c) in g.degree_histogram() {
            if d > 0 {
                *counts.entry(d).or_default() += c;
            }
        }
    }
    let points: Vec<(f64, f64)> = counts
        .iter()
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64).ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    #[test]
    fn base_case_is_complete_seed_clique() {
        let mut rng = rng_from(1, &[]);
        let g = NetworkGraph::generate_initial(3, 2, &mut rng).unwrap();
        // complete digraph over 3 nodes: 6 ordered pairs
        assert_eq!(g.edge_count(), 6);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.has_edge(i, j), i != j);
            }
        }
    }

    #[test]
    fn too_small_is_an_error() {
        let mut rng = rng_from(1, &[]);
        assert_eq!(
            NetworkGraph::generate_initial(2, 2, &mut rng),
            Err(GraphError::TooSmall { need: 3, got: 2 })
        );
    }

    #[test]
    fn same_seed_same_edges() {
        let g1 = NetworkGraph::generate_initial(64, 2, &mut rng_from(9, &[7])).unwrap();
        let g2 = NetworkGraph::generate_initial(64, 2, &mut rng_from(9, &[7])).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn generated_graph_is_mutually_reachable_enough() {
        // every node reaches the seed clique and vice versa by construction
        let g = NetworkGraph::generate_initial(50, 2, &mut rng_from(3, &[])).unwrap();
        let r = g.reachable_from(0);
        assert_eq!(r.len(), 50);
    }

    #[test]
    fn heavy_tail_emerges() {
        let g = NetworkGraph::generate_initial(300, 2, &mut rng_from(5, &[])).unwrap();
        let mut degrees: Vec<usize> = g.online_nodes().map(|i| g.degree(i)).collect();
        degrees.sort_unstable();
        let median = degrees[degrees.len() / 2];
        let max = *degrees.last().unwrap();
        assert!(max >= 3 * median, "max {max} median {median}");
    }

    #[test]
    fn zero_lambda_leaves_graph_unchanged() {
        let mut g = NetworkGraph::generate_initial(10, 2, &mut rng_from(2, &[])).unwrap();
        let before = g.clone();
        let cfg = ChurnConfig { lambda: 0.0, ..Default::default() };
        let events = g.evolve(&cfg, &[], &mut rng_from(2, &[1]));
        assert!(events.is_empty());
        assert_eq!(g, before);
    }

    #[test]
    fn removal_respects_min_size() {
        let mut g = NetworkGraph::generate_initial(5, 2, &mut rng_from(4, &[])).unwrap();
        let cfg = ChurnConfig {
            lambda: 5.0,
            p_add: 0.0,
            min_size: 5,
            ..Default::default()
        };
        let events = g.evolve(&cfg, &[], &mut rng_from(4, &[1]));
        assert!(events.iter().all(|e| matches!(e, ChurnEvent::RemovalSkippedMinSize)));
        assert_eq!(g.online_count(), 5);
    }

    #[test]
    fn addition_with_empty_pool_is_logged() {
        let mut g = NetworkGraph::generate_initial(5, 2, &mut rng_from(4, &[])).unwrap();
        let cfg = ChurnConfig { lambda: 3.0, p_add: 1.0, ..Default::default() };
        let events = g.evolve(&cfg, &[], &mut rng_from(4, &[2]));
        assert!(!events.is_empty());
        assert!(events.iter().all(|e| matches!(e, ChurnEvent::AdditionSkippedEmptyPool)));
    }

    #[test]
    fn removed_edge_between_attacker_owned_nodes_is_restored() {
        let mut g = NetworkGraph::with_slots(4);
        for i in 0..4 {
            g.node_mut(i).online = true;
        }
        g.node_mut(0).attacker_owned = true;
        g.node_mut(1).attacker_owned = true;
        g.reconnect_attacker_owned();
        assert!(g.remove_edge(0, 1));
        assert!(!g.has_edge(0, 1));
        g.reconnect_attacker_owned();
        assert!(g.has_edge(0, 1));
        assert!(g.attacker_owned_mutually_reachable());
    }

    #[test]
    fn remove_device_marks_offline_only() {
        let mut g = NetworkGraph::generate_initial(6, 2, &mut rng_from(8, &[])).unwrap();
        assert!(g.remove_device(4));
        assert!(!g.node(4).online);
        // edges retained for potential reactivation
        assert!(g.degree(4) > 0);
        // double removal flagged
        assert!(!g.remove_device(4));
    }

    #[test]
    fn missing_edge_removal_is_flagged() {
        let mut g = NetworkGraph::with_slots(3);
        g.node_mut(0).online = true;
        g.node_mut(1).online = true;
        g.add_edge(0, 1);
        assert!(g.remove_edge(0, 1));
        assert!(!g.remove_edge(0, 1));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = NetworkGraph::from_edge_list("0 1\n1 2\n# comment\n\n2 0\n", 4).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && g.has_edge(2, 0));
        assert_eq!(g.online_count(), 3);
        assert!(matches!(
            NetworkGraph::from_edge_list("0 9\n", 4),
            Err(GraphError::NodeOutOfRange(9))
        ));
        assert!(matches!(
            NetworkGraph::from_edge_list("0\n", 4),
            Err(GraphError::BadEdgeLine(1))
        ));
    }

    #[test]
    fn churn_rate_matches_poisson_mean() {
        // smaller Monte Carlo here; the full 1e5-step check runs in the
        // acceptance suite
        let mut g = NetworkGraph::generate_initial(10, 2, &mut rng_from(11, &[])).unwrap();
        let cfg = ChurnConfig { lambda: 0.7, p_add: 0.5, p_att: 0.0, attach_m: 1, min_size: 8 };
        let mut rng = rng_from(11, &[3]);
        let steps = 20_000;
        let mut events = 0usize;
        for _ in 0..steps {
            let pool: Vec<DeviceId> = (0..10).filter(|&i| !g.node(i).online).collect();
            events += g.evolve(&cfg, &pool, &mut rng).len();
        }
        let mean = events as f64 / steps as f64;
        assert!((mean - 0.7).abs() < 0.05, "mean {mean}");
    }
}
