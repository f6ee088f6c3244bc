//! Graph file ingestion and export.
//!
//! Schema: `{ "num_nodes": int, "class_count": int, "features": [[real]],
//! "labels": [int], "splits": ["train"|"val"|"test"], "edges": [[int,int]] }`
//! plus an optional `"motif_edges": [[int,int]]` side channel. Edge order in
//! the file carries no meaning; edges are canonicalized and deduplicated on
//! load.

use super::{LabeledGraph, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct GraphFile {
    num_nodes: usize,
    class_count: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadReport {
    /// Duplicate edges dropped during canonicalization.
    pub duplicate_edges: usize,
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<(LabeledGraph, LoadReport)> {
    let text = std::fs::read_to_string(path)?;
    let file: GraphFile =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;

    if file.features.len() != file.num_nodes {
        return Err(Error::Schema(format!(
            "features has {} rows, expected num_nodes = {}",
            file.features.len(),
            file.num_nodes
        )));
    }
    let width = file.features.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::Schema("features must have at least one column".into()));
    }
    let mut data = Vec::with_capacity(file.num_nodes * width);
    for (v, row) in file.features.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Schema(format!(
                "feature row {v} has width {}, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {v}")));
        }
        data.extend_from_slice(row);
    }
    let features = Tensor::from_vec(file.num_nodes, width, data);

    let (mut graph, duplicate_edges) = LabeledGraph::new(
        file.num_nodes,
        file.edges,
        features,
        file.labels,
        file.splits,
        file.class_count,
    )?;
    if let Some(pairs) = &file.motif_edges {
        graph.set_motif_edges(pairs)?;
    }
    Ok((graph, LoadReport { duplicate_edges }))
}

pub fn save_graph(path: impl AsRef<Path>, g: &LabeledGraph) -> Result<()> {
    let features = (0..g.num_nodes()).map(|v| g.features().row(v).to_vec()).collect();
    let file = GraphFile {
        num_nodes: g.num_nodes(),
        class_count: g.class_count(),
        features,
        labels: g.labels().to_vec(),
        splits: g.splits().to_vec(),
        edges: g.edges().to_vec(),
        motif_edges: g
            .motif_edges()
            .map(|ids| ids.iter().map(|&e| g.edge(e).unwrap()).collect()),
    };
    let json = serde_json::to_string(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}
