//! Graph data model: canonical undirected edges, labels, splits, receptive
//! fields and pruning.

mod generate;
mod json;

pub use generate::{generate_ba_shapes, BaShapesConfig, FeatureMode};
pub use json::{load_graph, save_graph, LoadReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Stable ordinal of a canonical edge within a graph's sorted edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Canonical form of an undirected edge: endpoints sorted ascending.
/// Self-loops are rejected.
pub fn canonical_edge(i: usize, j: usize) -> Result<(usize, usize)> {
    if i == j {
        return Err(Error::SelfLoop(i));
    }
    Ok((i.min(j), i.max(j)))
}

/// Undirected, unweighted graph with node features, labels and
/// train/val/test splits. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    labels: Vec<usize>,
    splits: Vec<Split>,
    class_count: usize,
    /// Ground-truth motif edges, when a generator marked them.
    motif_edges: Option<Vec<EdgeId>>,
    adjacency: Vec<Vec<(usize, EdgeId)>>,
}

impl LabeledGraph {
    /// Build a graph, canonicalizing, sorting and deduplicating the edge
    /// list. Returns the number of duplicate edges that were dropped.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        labels: Vec<usize>,
        splits: Vec<Split>,
        class_count: usize,
    ) -> Result<(Self, usize)> {
        if features.rows() != num_nodes {
            return Err(Error::Schema(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::Schema(format!(
                "{} labels for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        if splits.len() != num_nodes {
            return Err(Error::Schema(format!(
                "{} split flags for {} nodes",
                splits.len(),
                num_nodes
            )));
        }
        for &l in &labels {
            if l >= class_count {
                return Err(Error::LabelOutOfRange { label: l, class_count });
            }
        }
        let mut canonical = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= num_nodes {
                return Err(Error::NodeOutOfRange { index: i, num_nodes });
            }
            if j >= num_nodes {
                return Err(Error::NodeOutOfRange { index: j, num_nodes });
            }
            canonical.push(canonical_edge(i, j)?);
        }
        canonical.sort_unstable();
        let before = canonical.len();
        canonical.dedup();
        let duplicates = before - canonical.len();

        let mut adjacency = vec![Vec::new(); num_nodes];
        for (id, &(i, j)) in canonical.iter().enumerate() {
            adjacency[i].push((j, EdgeId(id)));
            adjacency[j].push((i, EdgeId(id)));
        }

        Ok((
            Self {
                num_nodes,
                edges: canonical,
                features,
                labels,
                splits,
                class_count,
                motif_edges: None,
                adjacency,
            },
            duplicates,
        ))
    }

    /// Mark ground-truth motif edges by endpoint pair. Pairs that are not
    /// edges of the graph are an error.
    pub fn set_motif_edges(&mut self, pairs: &[(usize, usize)]) -> Result<()> {
        let mut ids = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            let (a, b) = canonical_edge(i, j)?;
            let id = self
                .edge_id(a, b)
                .ok_or_else(|| Error::Schema(format!("motif edge ({a}, {b}) not in graph")))?;
            ids.push(id);
        }
        ids.sort_unstable();
        ids.dedup();
        self.motif_edges = Some(ids);
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted lexicographically; index = `EdgeId`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Result<(usize, usize)> {
        self.edges.get(id.0).copied().ok_or(Error::UnknownEdge(id.0))
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<EdgeId> {
        let (a, b) = (i.min(j), i.max(j));
        self.edges.binary_search(&(a, b)).ok().map(EdgeId)
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn motif_edges(&self) -> Option<&[EdgeId]> {
        self.motif_edges.as_deref()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, EdgeId)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.splits[v] == split).collect()
    }

    /// BFS distances from `v`, capped at `max_dist`. `None` = unreachable
    /// within the cap.
    pub fn bfs_distances(&self, v: usize, max_dist: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes];
        dist[v] = Some(0);
        let mut frontier = vec![v];
        for d in 1..=max_dist {
            let mut next = Vec::new();
            for &u in &frontier {
                for &(w, _) in &self.adjacency[u] {
                    if dist[w].is_none() {
                        dist[w] = Some(d);
                        next.push(w);
                    }
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        dist
    }

    /// Edges that can influence an L-layer message-passing output at `v`:
    /// both endpoints within `hops` of `v` and the edge reachable along a
    /// path of at most `hops` edges from `v`. Sorted by id.
    pub fn receptive_field(&self, v: usize, hops: usize) -> Vec<EdgeId> {
        assert!(hops >= 1, "receptive_field requires hops >= 1");
        let dist = self.bfs_distances(v, hops);
        let mut out = Vec::new();
        for (id, &(i, j)) in self.edges.iter().enumerate() {
            match (dist[i], dist[j]) {
                (Some(di), Some(dj)) if di.min(dj) < hops => out.push(EdgeId(id)),
                _ => {}
            }
        }
        out
    }

    /// Restrict edges to `keep`; nodes, features, labels and splits are
    /// unchanged, so isolated nodes survive.
    pub fn prune(&self, keep: &[EdgeId]) -> Result<LabeledGraph> {
        let mut flags = vec![false; self.edges.len()];
        for &EdgeId(id) in keep {
            if id >= self.edges.len() {
                return Err(Error::UnknownEdge(id));
            }
            flags[id] = true;
        }
        let mut kept_pairs = Vec::new();
        let mut old_to_new = vec![None; self.edges.len()];
        for (id, &pair) in self.edges.iter().enumerate() {
            if flags[id] {
                old_to_new[id] = Some(EdgeId(kept_pairs.len()));
                kept_pairs.push(pair);
            }
        }
        let motif = self.motif_edges.as_ref().map(|ids| {
            ids.iter().filter_map(|&EdgeId(id)| old_to_new[id]).collect::<Vec<_>>()
        });
        let (mut g, dup) = LabeledGraph::new(
            self.num_nodes,
            kept_pairs,
            self.features.clone(),
            self.labels.clone(),
            self.splits.clone(),
            self.class_count,
        )?;
        debug_assert_eq!(dup, 0);
        g.motif_edges = motif;
        Ok(g)
    }

    pub fn all_edge_ids(&self) -> Vec<EdgeId> {
        (0..self.edges.len()).map(EdgeId).collect()
    }
}

/// Per-edge real multipliers, default 1.0 (identity).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(Vec<f64>);

impl EdgeWeights {
    pub fn ones(num_edges: usize) -> Self {
        Self(vec![1.0; num_edges])
    }

    pub fn zeros(num_edges: usize) -> Self {
        Self(vec![0.0; num_edges])
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge weights".into()));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, e: EdgeId) -> f64 {
        self.0[e.0]
    }

    pub fn set(&mut self, e: EdgeId, v: f64) {
        self.0[e.0] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_graph(num_nodes: usize, edges: &[(usize, usize)]) -> LabeledGraph {
        let (g, _) = LabeledGraph::new(
            num_nodes,
            edges.to_vec(),
            Tensor::ones(num_nodes, 2),
            vec![0; num_nodes],
            vec![Split::Train; num_nodes],
            1,
        )
        .unwrap();
        g
    }

    #[test]
    fn canonical_edge_orders_and_rejects_self_loop() {
        assert_eq!(canonical_edge(3, 1).unwrap(), (1, 3));
        assert_eq!(canonical_edge(0, 7).unwrap(), (0, 7));
        assert!(matches!(canonical_edge(5, 5), Err(Error::SelfLoop(5))));
    }

    #[test]
    fn edge_list_sorted_and_deduped() {
        let (g, dups) = LabeledGraph::new(
            5,
            vec![(4, 2), (2, 4), (1, 0), (3, 4)],
            Tensor::ones(5, 1),
            vec![0; 5],
            vec![Split::Train; 5],
            1,
        )
        .unwrap();
        assert_eq!(dups, 1);
        assert_eq!(g.edges(), &[(0, 1), (2, 4), (3, 4)]);
    }

    #[test]
    fn receptive_field_path_graph() {
        // 0 - 1 - 2 - 3, v = 0, hops = 2 -> {(0,1), (1,2)}
        let g = toy_graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let rf = g.receptive_field(0, 2);
        let pairs: Vec<_> = rf.iter().map(|&e| g.edge(e).unwrap()).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn receptive_field_star_center() {
        let g = toy_graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(g.receptive_field(0, 1).len(), 4);
    }

    #[test]
    fn receptive_field_monotone_in_hops() {
        let g = toy_graph(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6)]);
        for v in 0..7 {
            let r1 = g.receptive_field(v, 1);
            let r2 = g.receptive_field(v, 2);
            assert!(r1.iter().all(|e| r2.contains(e)), "RF({v},1) not within RF({v},2)");
        }
    }

    #[test]
    fn prune_identity_and_empty() {
        let g = toy_graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let same = g.prune(&g.all_edge_ids()).unwrap();
        assert_eq!(same, g);
        let none = g.prune(&[]).unwrap();
        assert_eq!(none.num_edges(), 0);
        assert_eq!(none.num_nodes(), 4);
    }

    #[test]
    fn prune_triangle_degrees() {
        let g = toy_graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let keep = vec![g.edge_id(0, 1).unwrap()];
        let pruned = g.prune(&keep).unwrap();
        let degs: Vec<_> = (0..3).map(|v| pruned.degree(v)).collect();
        assert_eq!(degs, vec![1, 1, 0]);
    }

    #[test]
    fn prune_rejects_unknown_edge() {
        let g = toy_graph(3, &[(0, 1)]);
        assert!(matches!(g.prune(&[EdgeId(5)]), Err(Error::UnknownEdge(5))));
    }

    proptest::proptest! {
        #[test]
        fn construction_canonicalizes_and_prune_all_is_identity(
            raw in proptest::collection::vec((0usize..12, 0usize..12), 0..40)
        ) {
            let edges: Vec<(usize, usize)> =
                raw.into_iter().filter(|&(i, j)| i != j).collect();
            let (g, _) = LabeledGraph::new(
                12,
                edges,
                Tensor::ones(12, 1),
                vec![0; 12],
                vec![Split::Train; 12],
                1,
            )
            .unwrap();
            // sorted, duplicate-free, canonical
            for window in g.edges().windows(2) {
                proptest::prop_assert!(window[0] < window[1]);
            }
            for &(i, j) in g.edges() {
                proptest::prop_assert!(i < j);
            }
            proptest::prop_assert_eq!(&g.prune(&g.all_edge_ids()).unwrap(), &g);
        }
    }

    #[test]
    fn motif_edges_survive_prune_with_remapped_ids() {
        let mut g = toy_graph(4, &[(0, 1), (1, 2), (2, 3)]);
        g.set_motif_edges(&[(1, 2), (2, 3)]).unwrap();
        let keep = vec![g.edge_id(1, 2).unwrap(), g.edge_id(2, 3).unwrap()];
        let pruned = g.prune(&keep).unwrap();
        let motif_pairs: Vec<_> = pruned
            .motif_edges()
            .unwrap()
            .iter()
            .map(|&e| pruned.edge(e).unwrap())
            .collect();
        assert_eq!(motif_pairs, vec![(1, 2), (2, 3)]);
    }
}
