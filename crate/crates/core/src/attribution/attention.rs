//! Attention-based attribution: post-softmax coefficients of the unweighted
//! forward pass, averaged over all layers, heads and both edge directions.
//! The table is shared by every target; each local mask restricts it to the
//! target's receptive field.

use super::{LocalMask, TargetSpec, MODEL_HOPS};
use crate::error::Result;
use crate::gnn::GatModel;
use crate::graph::LabeledGraph;

pub fn attr_attention_from_table(
    table: &[f64],
    g: &LabeledGraph,
    target: TargetSpec,
) -> Result<LocalMask> {
    let scores = g
        .receptive_field(target.node, MODEL_HOPS)
        .into_iter()
        .map(|e| (e, table[e.0]))
        .collect();
    LocalMask::new(target, scores)
}

pub fn attr_attention(model: &GatModel, g: &LabeledGraph, target: TargetSpec) -> Result<LocalMask> {
    let table = model.attention_table(g)?;
    attr_attention_from_table(&table, g, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{GatConfig, GatModel};
    use crate::graph::{LabeledGraph, Split};
    use crate::tensor::Tensor;

    fn two_node_graph(features: Tensor) -> LabeledGraph {
        let (g, _) = LabeledGraph::new(
            2,
            vec![(0, 1)],
            features,
            vec![0, 1],
            vec![Split::Train, Split::Train],
            2,
        )
        .unwrap();
        g
    }

    #[test]
    fn identical_features_give_half_attention() {
        // both directions softmax over {self, neighbor} with equal logits
        let g = two_node_graph(Tensor::from_vec(2, 2, vec![0.4, -0.3, 0.4, -0.3]));
        let model = GatModel::new_random(GatConfig::for_graph(&g, 3, 2), 7);
        let mask = attr_attention(&model, &g, TargetSpec { node: 0, class: 0 }).unwrap();
        assert_eq!(mask.len(), 1);
        assert!((mask.scores()[0].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_neighbor_matches_hand_softmax() {
        let g = two_node_graph(Tensor::from_vec(2, 2, vec![1.0, 0.5, -0.2, 0.8]));
        let config = GatConfig {
            feature_dim: 2,
            hidden: 2,
            heads: 1,
            class_count: 2,
            leaky_slope: 0.2,
        };
        let mut model = GatModel::new_random(config, 0);
        model.params.w1[0] = Tensor::from_vec(2, 2, vec![0.3, -0.1, 0.2, 0.4]);
        model.params.a1_src[0] = Tensor::from_vec(2, 1, vec![0.5, -0.7]);
        model.params.a1_dst[0] = Tensor::from_vec(2, 1, vec![0.9, 0.2]);
        model.params.w2 = Tensor::from_vec(2, 2, vec![0.6, -0.3, 0.1, 0.8]);
        model.params.a2_src = Tensor::from_vec(2, 1, vec![-0.4, 0.3]);
        model.params.a2_dst = Tensor::from_vec(2, 1, vec![0.2, 0.6]);

        // independent scalar recomputation of the two layer-1 directions
        let leaky = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let h = |x: [f64; 2]| [0.3 * x[0] + 0.2 * x[1], -0.1 * x[0] + 0.4 * x[1]];
        let h0 = h([1.0, 0.5]);
        let h1 = h([-0.2, 0.8]);
        let s_src = |h: [f64; 2]| 0.5 * h[0] - 0.7 * h[1];
        let s_dst = |h: [f64; 2]| 0.9 * h[0] + 0.2 * h[1];
        let softmax_pair = |cross: f64, own: f64| {
            let ec = leaky(cross).exp();
            let eo = leaky(own).exp();
            ec / (ec + eo)
        };
        // direction 1 -> 0 at destination 0, against the self message 0 -> 0
        let a_10 = softmax_pair(s_src(h1) + s_dst(h0), s_src(h0) + s_dst(h0));
        // direction 0 -> 1
        let a_01 = softmax_pair(s_src(h0) + s_dst(h1), s_src(h1) + s_dst(h1));

        // layer 2 on hidden states: with one edge, hidden of node u is
        // alpha_self * h_u + alpha_other * h_other, elu'd; recompute
        let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
        let mix = |own: [f64; 2], other: [f64; 2], a_other: f64| {
            [
                elu((1.0 - a_other) * own[0] + a_other * other[0]),
                elu((1.0 - a_other) * own[1] + a_other * other[1]),
            ]
        };
        let z0 = mix(h0, h1, a_10);
        let z1 = mix(h1, h0, a_01);
        let hz = |x: [f64; 2]| [0.6 * x[0] + 0.1 * x[1], -0.3 * x[0] + 0.8 * x[1]];
        let g0 = hz(z0);
        let g1 = hz(z1);
        let t_src = |h: [f64; 2]| -0.4 * h[0] + 0.3 * h[1];
        let t_dst = |h: [f64; 2]| 0.2 * h[0] + 0.6 * h[1];
        let b_10 = softmax_pair(t_src(g1) + t_dst(g0), t_src(g0) + t_dst(g0));
        let b_01 = softmax_pair(t_src(g0) + t_dst(g1), t_src(g1) + t_dst(g1));

        let expected = (a_10 + a_01 + b_10 + b_01) / 4.0;
        let mask = attr_attention(&model, &g, TargetSpec { node: 0, class: 0 }).unwrap();
        assert!(
            (mask.scores()[0].1 - expected).abs() < 1e-12,
            "got {}, hand value {expected}",
            mask.scores()[0].1
        );
    }

    #[test]
    fn scores_ignore_the_target_class() {
        let g = two_node_graph(Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let model = GatModel::new_random(GatConfig::for_graph(&g, 3, 2), 4);
        let a = attr_attention(&model, &g, TargetSpec { node: 0, class: 0 }).unwrap();
        let b = attr_attention(&model, &g, TargetSpec { node: 0, class: 1 }).unwrap();
        assert_eq!(a.scores(), b.scores());
    }
}
