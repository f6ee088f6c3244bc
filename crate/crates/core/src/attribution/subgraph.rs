//! Receptive-field subgraph extraction. An L-layer model's output at a node
//! depends only on its L-hop neighborhood and the receptive-field edges, so
//! per-target work runs on the (much smaller) extracted subgraph.

use crate::gnn::MessageLayout;
use crate::graph::{EdgeId, LabeledGraph};
use crate::tensor::Tensor;

pub struct Neighborhood {
    /// Original node ids within `hops` of the center, ascending; position =
    /// local id.
    pub nodes: Vec<usize>,
    pub center_local: usize,
    /// Receptive-field edges as local canonical pairs, ascending by the
    /// original edge id.
    pub edges_local: Vec<(usize, usize)>,
    /// Original id of each local edge.
    pub edge_ids: Vec<EdgeId>,
    /// Features of the local nodes.
    pub features: Tensor,
    pub layout: MessageLayout,
}

impl Neighborhood {
    pub fn extract(g: &LabeledGraph, center: usize, hops: usize) -> Self {
        let dist = g.bfs_distances(center, hops);
        let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&v| dist[v].is_some()).collect();
        let mut local_of = vec![usize::MAX; g.num_nodes()];
        for (local, &v) in nodes.iter().enumerate() {
            local_of[v] = local;
        }
        let edge_ids = g.receptive_field(center, hops);
        let edges_local: Vec<(usize, usize)> = edge_ids
            .iter()
            .map(|&e| {
                let (i, j) = g.edge(e).expect("receptive field edge");
                (local_of[i], local_of[j])
            })
            .collect();
        let d = g.feature_dim();
        let mut features = Tensor::zeros(nodes.len(), d);
        for (local, &v) in nodes.iter().enumerate() {
            features.data_mut()[local * d..(local + 1) * d].copy_from_slice(g.features().row(v));
        }
        let layout = MessageLayout::new(nodes.len(), &edges_local);
        Self {
            nodes,
            center_local: local_of[center],
            edges_local,
            edge_ids,
            features,
            layout,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edge_ids.len()
    }
}
