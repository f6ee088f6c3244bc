//! DOT export of a node's neighborhood under a pruning decision: kept edges
//! solid, removed edges dashed grey, ground-truth motif edges highlighted,
//! nodes filled by class, center double-circled.

use anyhow::{bail, Result};
use gnnprune::aggregate::{hard_mask, GlobalMask};
use gnnprune::graph::LabeledGraph;

const CLASS_COLORS: [&str; 8] = [
    "#c6dbef", "#fdd0a2", "#c7e9c0", "#dadaeb", "#f2b6b6", "#fee391", "#d9d9d9", "#bcbddc",
];

pub fn export_dot(
    g: &LabeledGraph,
    gm: &GlobalMask,
    percent: f64,
    center: usize,
    radius: usize,
) -> Result<String> {
    if center >= g.num_nodes() {
        bail!("center node {center} out of range ({} nodes)", g.num_nodes());
    }
    if gm.num_edges() != g.num_edges() {
        bail!("global mask covers {} edges, graph has {}", gm.num_edges(), g.num_edges());
    }
    let hm = hard_mask(gm, percent)?;
    let mut removed = vec![false; g.num_edges()];
    for e in &hm.removed {
        removed[e.0] = true;
    }
    let motif = {
        let mut flags = vec![false; g.num_edges()];
        if let Some(ids) = g.motif_edges() {
            for e in ids {
                flags[e.0] = true;
            }
        }
        flags
    };

    let dist = g.bfs_distances(center, radius);
    let field = g.receptive_field(center, radius);

    let mut out = String::from("graph neighborhood {\n");
    out.push_str("  node [style=filled fontname=\"Helvetica\"];\n");
    for v in 0..g.num_nodes() {
        if dist[v].is_none() {
            continue;
        }
        let color = CLASS_COLORS[g.labels()[v] % CLASS_COLORS.len()];
        if v == center {
            out.push_str(&format!(
                "  {v} [shape=doublecircle fillcolor=\"gold\" xlabel=\"class {}\"];\n",
                g.labels()[v]
            ));
        } else {
            out.push_str(&format!("  {v} [fillcolor=\"{color}\"];\n"));
        }
    }
    for e in &field {
        let (i, j) = g.edge(*e)?;
        let mut attrs: Vec<String> = Vec::new();
        if removed[e.0] {
            attrs.push("style=dashed".into());
            attrs.push("color=\"grey\"".into());
        } else if motif[e.0] {
            attrs.push("color=\"blue\"".into());
            attrs.push("penwidth=2".into());
        }
        if motif[e.0] && removed[e.0] {
            attrs.push("penwidth=2".into());
        }
        if attrs.is_empty() {
            out.push_str(&format!("  {i} -- {j};\n"));
        } else {
            out.push_str(&format!("  {i} -- {j} [{}];\n", attrs.join(" ")));
        }
    }
    out.push_str("}\n");
    Ok(out)
}
