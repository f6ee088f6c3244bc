//! Independent reference implementations checking the library's core
//! quantities: receptive fields against brute-force perturbation, and
//! aggregation against a from-scratch accumulator.

use gnnprune::aggregate::{aggregate, hard_mask, AggregationMode};
use gnnprune::attribution::{LocalMask, TargetSpec};
use gnnprune::graph::{EdgeId, LabeledGraph, Split};
use gnnprune::tensor::Tensor;
use std::collections::HashMap;

fn plain_graph(num_nodes: usize, edges: &[(usize, usize)]) -> LabeledGraph {
    let (g, _) = LabeledGraph::new(
        num_nodes,
        edges.to_vec(),
        Tensor::ones(num_nodes, 1),
        vec![0; num_nodes],
        vec![Split::Train; num_nodes],
        1,
    )
    .unwrap();
    g
}

/// Two rounds of weighted sum-propagation with distinct positive features;
/// an edge influences the output at `v` iff its weight flip changes it.
fn propagate_twice(g: &LabeledGraph, weights: &[f64], v: usize) -> f64 {
    let n = g.num_nodes();
    let mut h: Vec<f64> = (0..n).map(|u| (u + 1) as f64).collect();
    for _ in 0..2 {
        let mut next = h.clone();
        for (id, &(i, j)) in g.edges().iter().enumerate() {
            next[j] += weights[id] * h[i];
            next[i] += weights[id] * h[j];
        }
        h = next;
    }
    h[v]
}

#[test]
fn receptive_field_equals_brute_force_influence_support() {
    let g = plain_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3), (4, 5)]);
    for v in 0..6 {
        let base = propagate_twice(&g, &vec![1.0; g.num_edges()], v);
        let mut influencing = Vec::new();
        for id in 0..g.num_edges() {
            let mut w = vec![1.0; g.num_edges()];
            w[id] = 2.0;
            if (propagate_twice(&g, &w, v) - base).abs() > 1e-12 {
                influencing.push(EdgeId(id));
            }
        }
        assert_eq!(g.receptive_field(v, 2), influencing, "node {v}");
    }
}

/// Brute-force aggregation: a plain hash-map accumulator, no shared code
/// with the library path.
fn reference_aggregate(
    masks: &[(usize, Vec<(usize, f64)>)],
    num_edges: usize,
    average: bool,
) -> Vec<f64> {
    let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
    for (_, scores) in masks {
        for &(e, s) in scores {
            let entry = sums.entry(e).or_insert((0.0, 0));
            entry.0 += s;
            entry.1 += 1;
        }
    }
    (0..num_edges)
        .map(|e| match sums.get(&e) {
            None => 0.0,
            Some(&(total, count)) => {
                if average {
                    total / count as f64
                } else {
                    total
                }
            }
        })
        .collect()
}

#[test]
fn aggregation_matches_brute_force_on_the_five_node_path() {
    // path 0-1-2-3-4; masks over each node's 2-hop receptive field with
    // score (v+1)*(edge_index+1)
    let g = plain_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    let raw: Vec<(usize, Vec<(usize, f64)>)> = (0..5)
        .map(|v| {
            let scores = g
                .receptive_field(v, 2)
                .into_iter()
                .map(|e| (e.0, ((v + 1) * (e.0 + 1)) as f64))
                .collect();
            (v, scores)
        })
        .collect();
    let masks: Vec<LocalMask> = raw
        .iter()
        .map(|(v, scores)| {
            LocalMask::new(
                TargetSpec { node: *v, class: 0 },
                scores.iter().map(|&(e, s)| (EdgeId(e), s)).collect(),
            )
            .unwrap()
        })
        .collect();

    let sum = aggregate(&masks, &g, AggregationMode::Sum).unwrap();
    let avg = aggregate(&masks, &g, AggregationMode::Average).unwrap();
    assert_eq!(sum.scores, reference_aggregate(&raw, g.num_edges(), false));
    assert_eq!(avg.scores, reference_aggregate(&raw, g.num_edges(), true));

    // frozen hand values: coverages (3,4,4,3), sums (6,20,42,48),
    // averages (2,5,10.5,16)
    assert_eq!(sum.coverage, vec![3, 4, 4, 3]);
    assert_eq!(sum.scores, vec![6.0, 20.0, 42.0, 48.0]);
    assert_eq!(avg.scores, vec![2.0, 5.0, 10.5, 16.0]);

    // p=50 removes the two lowest-scored edges
    let hm = hard_mask(&sum, 50.0).unwrap();
    assert_eq!(hm.removed, vec![EdgeId(0), EdgeId(1)]);
    assert_eq!(hm.keep, vec![EdgeId(2), EdgeId(3)]);
}
