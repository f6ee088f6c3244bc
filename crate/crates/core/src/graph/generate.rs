//! Synthetic benchmark generator: a Barabási–Albert base graph with attached
//! 5-node "house" motifs whose members carry role labels.

use super::{LabeledGraph, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One-hot bucket of the node degree, capped at `feature_dim - 1`.
    /// A softmax-attention model aggregates to a constant on featureless
    /// graphs, so degree buckets are the default signal carrier.
    DegreeBuckets,
    /// Constant all-ones rows.
    AllOnes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaShapesConfig {
    pub base_nodes: usize,
    pub motif_count: usize,
    pub extra_edge_fraction: f64,
    /// Edges added per node during preferential attachment.
    pub attach_edges: usize,
    pub feature_dim: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl Default for BaShapesConfig {
    fn default() -> Self {
        Self {
            base_nodes: 300,
            motif_count: 80,
            extra_edge_fraction: 0.1,
            attach_edges: 5,
            feature_dim: 10,
            feature_mode: FeatureMode::DegreeBuckets,
            seed: 0,
        }
    }
}

impl BaShapesConfig {
    pub fn new(base_nodes: usize, motif_count: usize, extra_edge_fraction: f64, seed: u64) -> Self {
        Self { base_nodes, motif_count, extra_edge_fraction, seed, ..Self::default() }
    }
}

const HOUSE_SIZE: usize = 5;
// house roles within a motif block: [top, mid, mid, bottom, bottom]
const LABEL_TOP: usize = 1;
const LABEL_MID: usize = 2;
const LABEL_BOTTOM: usize = 3;

/// Generate a labeled BA-Shapes graph. Deterministic in the config,
/// including the seed.
pub fn generate_ba_shapes(cfg: &BaShapesConfig) -> Result<LabeledGraph> {
    if cfg.base_nodes < 5 {
        return Err(Error::InvalidArgument(format!(
            "base_nodes must be at least 5, got {}",
            cfg.base_nodes
        )));
    }
    if cfg.attach_edges == 0 || cfg.attach_edges > cfg.base_nodes {
        return Err(Error::InvalidArgument(format!(
            "attach_edges must be in 1..=base_nodes, got {}",
            cfg.attach_edges
        )));
    }
    if !(0.0..=1.0).contains(&cfg.extra_edge_fraction) || !cfg.extra_edge_fraction.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "extra_edge_fraction must be in [0, 1], got {}",
            cfg.extra_edge_fraction
        )));
    }
    if cfg.feature_dim == 0 {
        return Err(Error::InvalidArgument("feature_dim must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_nodes = cfg.base_nodes + HOUSE_SIZE * cfg.motif_count;
    let mut edges = Vec::new();

    // preferential attachment over the base nodes
    let m = cfg.attach_edges;
    let mut targets: Vec<usize> = (0..m).collect();
    let mut repeated: Vec<usize> = Vec::new();
    for v in m..cfg.base_nodes {
        for &t in &targets {
            edges.push((v, t));
        }
        repeated.extend(&targets);
        repeated.extend(std::iter::repeat_n(v, m));
        let mut next = Vec::with_capacity(m);
        while next.len() < m {
            let pick = repeated[rng.random_range(0..repeated.len())];
            if !next.contains(&pick) {
                next.push(pick);
            }
        }
        targets = next;
    }

    // houses: triangle roof on a square, attached to a random base node
    let mut labels = vec![0usize; num_nodes];
    let mut motif_pairs = Vec::with_capacity(cfg.motif_count * 6);
    for h in 0..cfg.motif_count {
        let b = cfg.base_nodes + HOUSE_SIZE * h;
        let (top, m1, m2, b1, b2) = (b, b + 1, b + 2, b + 3, b + 4);
        let house = [(top, m1), (top, m2), (m1, m2), (m1, b1), (m2, b2), (b1, b2)];
        edges.extend_from_slice(&house);
        motif_pairs.extend_from_slice(&house);
        labels[top] = LABEL_TOP;
        labels[m1] = LABEL_MID;
        labels[m2] = LABEL_MID;
        labels[b1] = LABEL_BOTTOM;
        labels[b2] = LABEL_BOTTOM;
        // anchor at the roof: bottoms stay the only degree-2 house nodes,
        // which keeps all three roles separable from local degree profiles
        let anchor = rng.random_range(0..cfg.base_nodes);
        edges.push((top, anchor));
    }

    // random extra edges, avoiding duplicates and self-loops
    let extra = (cfg.extra_edge_fraction * num_nodes as f64).floor() as usize;
    let mut existing: std::collections::HashSet<(usize, usize)> =
        edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    let mut added = 0;
    while added < extra {
        let i = rng.random_range(0..num_nodes);
        let j = rng.random_range(0..num_nodes);
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if existing.insert(key) {
            edges.push(key);
            added += 1;
        }
    }

    // features need final degrees
    let mut degree = vec![0usize; num_nodes];
    for &(i, j) in &edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    let d = cfg.feature_dim;
    let mut features = Tensor::zeros(num_nodes, d);
    match cfg.feature_mode {
        FeatureMode::DegreeBuckets => {
            for v in 0..num_nodes {
                features.set(v, degree[v].min(d - 1), 1.0);
            }
        }
        FeatureMode::AllOnes => {
            features = Tensor::ones(num_nodes, d);
        }
    }

    // seeded 80/10/10 split by shuffled node order
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut rng);
    let n_train = num_nodes * 8 / 10;
    let n_val = num_nodes / 10;
    let mut splits = vec![Split::Test; num_nodes];
    for (rank, &v) in order.iter().enumerate() {
        splits[v] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let (mut graph, duplicates) =
        LabeledGraph::new(num_nodes, edges, features, labels, splits, 4)?;
    debug_assert_eq!(duplicates, 0);
    graph.set_motif_edges(&motif_pairs)?;
    Ok(graph)
}
