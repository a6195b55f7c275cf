//! Isolation-forest anomaly detection over simulated per-device traffic
//! features, with burn-in fitting and sensitivity thresholding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DeviceId;

pub const TRAFFIC_FEATURES: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectorError {
    #[error("need at least {need} samples to fit, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("forest scored before being trained")]
    Untrained,
}

/// Per-device, per-step traffic features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub device: DeviceId,
    pub step: u64,
    pub workload_traffic: f64,
    pub probe_traffic: f64,
    pub exploit_traffic: f64,
    pub neighbor_fanout: f64,
}

impl TrafficSample {
    pub fn features(&self) -> [f64; TRAFFIC_FEATURES] {
        [
            self.workload_traffic,
            self.probe_traffic,
            self.exploit_traffic,
            self.neighbor_fanout,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum IsoNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IsoTree {
    nodes: Vec<IsoNode>,
}

impl IsoTree {
    fn build(
        samples: &[[f64; TRAFFIC_FEATURES]],
        indices: Vec<usize>,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> IsoTree {
        let mut tree = IsoTree { nodes: Vec::new() };
        tree.grow(samples, indices, 0, max_depth, rng);
        tree
    }

    fn grow(
        &mut self,
        samples: &[[f64; TRAFFIC_FEATURES]],
        indices: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        if depth >= max_depth || indices.len() <= 1 {
            let id = self.nodes.len();
            self.nodes.push(IsoNode::Leaf { size: indices.len() });
            return id;
        }
        // splittable features are those with a non-degenerate range
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); TRAFFIC_FEATURES];
        for &i in &indices {
            for (f, r) in ranges.iter_mut().enumerate() {
                r.0 = r.0.min(samples[i][f]);
                r.1 = r.1.max(samples[i][f]);
            }
        }
        let splittable: Vec<usize> = (0..TRAFFIC_FEATURES)
            .filter(|&f| ranges[f].1 > ranges[f].0)
            .collect();
        if splittable.is_empty() {
            let id = self.nodes.len();
            self.nodes.push(IsoNode::Leaf { size: indices.len() });
            return id;
        }
        let feature = splittable[rng.gen_range(0..splittable.len())];
        let (lo, hi) = ranges[feature];
        let threshold = rng.gen_range(lo..hi);
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| samples[i][feature] < threshold);
        let id = self.nodes.len();
        self.nodes.push(IsoNode::Leaf { size: 0 }); // placeholder
        let left = self.grow(samples, left_idx, depth + 1, max_depth, rng);
        let right = self.grow(samples, right_idx, depth + 1, max_depth, rng);
        self.nodes[id] = IsoNode::Split { feature, threshold, left, right };
        id
    }

    /// Path length with the standard average-depth adjustment at leaves that
    /// still hold more than one point. The root is always node 0.
    fn path_length(&self, x: &[f64; TRAFFIC_FEATURES]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[node] {
                IsoNode::Leaf { size } => {
                    return depth + average_path_length(*size);
                }
                IsoNode::Split { feature, threshold, left, right } => {
                    depth += 1.0;
                    node = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Average path length of unsuccessful BST search over n points, the c(n)
/// normalizer. c(0) = c(1) = 0, c(2) = 1.
pub fn average_path_length(n: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let nf = n as f64;
            2.0 * ((nf - 1.0).ln() + EULER_GAMMA) - 2.0 * (nf - 1.0) / nf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<IsoTree>,
    subsample: usize,
    /// Alert threshold theta in [0, 1]: scan alerts when score > theta.
    pub threshold: f64,
}

impl IsolationForest {
    /// Standard isolation-forest fit: each tree grows on a random subsample
    /// with uniformly random feature/split choices, depth-limited at
    /// ceil(log2(subsample)).
    pub fn fit(
        samples: &[TrafficSample],
        trees: usize,
        subsample: usize,
        threshold: f64,
        seed: u64,
    ) -> Result<IsolationForest, DetectorError> {
        if samples.len() < subsample {
            return Err(DetectorError::InsufficientSamples {
                need: subsample,
                got: samples.len(),
            });
        }
        let features: Vec<[f64; TRAFFIC_FEATURES]> = samples.iter().map(|s| s.features()).collect();
        let max_depth = (subsample as f64).log2().ceil().max(0.0) as usize;
        let mut rng = crate::seeds::rng_from(seed, &[crate::seeds::tag("iforest")]);
        let built = (0..trees)
            .map(|_| {
                let mut idx: Vec<usize> = (0..features.len()).collect();
                // partial Fisher-Yates for the subsample
                for i in 0..subsample {
                    let j = rng.gen_range(i..idx.len());
                    idx.swap(i, j);
                }
                idx.truncate(subsample);
                IsoTree::build(&features, idx, max_depth, &mut rng)
            })
            .collect();
        Ok(IsolationForest {
            trees: built,
            subsample,
            threshold,
        })
    }

    /// Anomaly score s = 2^(-E[h(x)] / c(n)) in (0, 1]; higher is more
    /// anomalous.
    pub fn score(&self, features: &[f64; TRAFFIC_FEATURES]) -> f64 {
        let mean_path: f64 = self
            .trees
            .iter()
            .map(|t| t.path_length(features))
            .sum::<f64>()
            / self.trees.len() as f64;
        let c = average_path_length(self.subsample).max(1.0);
        2f64.powf(-mean_path / c)
    }

    /// Score each device's latest sample; alert where score > threshold.
    pub fn scan(&self, samples: &[TrafficSample]) -> Vec<ScanResult> {
        samples
            .iter()
            .map(|s| {
                let score = self.score(&s.features());
                ScanResult {
                    device: s.device,
                    score,
                    alert: score > self.threshold,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    pub device: DeviceId,
    pub score: f64,
    pub alert: bool,
}

/// Rank-sum AUC: probability a random positive scores above a random
/// negative (ties count half).
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in positive {
        for n in negative {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positive.len() as f64 * negative.len() as f64)
}
