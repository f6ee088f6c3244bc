//! Simplified graph convolution: K-step propagation with a symmetrically
//! normalized, self-looped adjacency, and the linear surrogate distilled
//! from a trained attention model.

use super::{argmax_labels, Adam, MessageLayout, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::tape::{GradientMode, Tape, TensorRef};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// K-step propagated features `Â^K X`, where `Â` is the adjacency with unit
/// self-loops, symmetrically normalized by the (self-looped) degrees.
pub fn sgc_features(g: &LabeledGraph, k: usize) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::InvalidArgument("propagation depth K must be at least 1".into()));
    }
    let n = g.num_nodes();
    let d = g.feature_dim();
    let deg: Vec<f64> = (0..n).map(|v| 1.0 + g.degree(v) as f64).collect();
    let dis: Vec<f64> = deg.iter().map(|&x| x.powf(-0.5)).collect();

    let mut current = g.features().clone();
    for _ in 0..k {
        let mut next = Tensor::zeros(n, d);
        for v in 0..n {
            let self_coef = dis[v] * dis[v];
            let src = current.row(v).to_vec();
            let dst = &mut next.data_mut()[v * d..(v + 1) * d];
            for (o, s) in dst.iter_mut().zip(&src) {
                *o += self_coef * s;
            }
        }
        for &(i, j) in g.edges() {
            let coef = dis[i] * dis[j];
            let row_i = current.row(i).to_vec();
            let row_j = current.row(j).to_vec();
            for c in 0..d {
                let vj = next.get(j, c) + coef * row_i[c];
                next.set(j, c, vj);
                let vi = next.get(i, c) + coef * row_j[c];
                next.set(i, c, vi);
            }
        }
        current = next;
    }
    Ok(current)
}

/// Tape version of [`sgc_features`] with differentiable edge weights: each
/// undirected edge's two directed entries of `Â` carry its multiplier and
/// degrees are computed on the weighted graph (self-loop weight fixed at 1).
pub fn sgc_features_tape(
    tape: &mut Tape,
    layout: &MessageLayout,
    features: TensorRef,
    edge_weights: TensorRef,
    k: usize,
) -> TensorRef {
    assert!(k >= 1, "propagation depth K must be at least 1");
    let n = layout.num_nodes;
    let wdup = tape.gather_rows(edge_weights, &layout.edge_dup);
    let deg_edges = tape.scatter_add_rows(wdup, layout.edge_msg_dst(), n);
    let deg = tape.add_scalar(deg_edges, 1.0);
    let dis = tape.powf(deg, -0.5);

    let e_src = &layout.src[..2 * layout.num_edges];
    let e_dst = layout.edge_msg_dst();
    let dis_src = tape.gather_rows(dis, e_src);
    let dis_dst = tape.gather_rows(dis, e_dst);
    let pair = tape.mul(dis_src, dis_dst);
    let edge_coefs = tape.mul(wdup, pair);
    let self_coefs = tape.mul(dis, dis);
    let coefs = tape.concat_rows(&[edge_coefs, self_coefs]);

    let mut h = features;
    for _ in 0..k {
        let gathered = tape.gather_rows(h, &layout.src);
        let scaled = tape.scale_rows(gathered, coefs);
        h = tape.scatter_add_rows(scaled, &layout.dst, n);
    }
    h
}

/// Linear model over K-step propagated features, distilled from a teacher's
/// argmax predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcSurrogate {
    pub k: usize,
    pub weights: Tensor,
    pub bias: Tensor,
    /// Fraction of nodes where the surrogate argmax matches the teacher's.
    pub agreement: f64,
}

impl SgcSurrogate {
    pub fn logits(&self, g: &LabeledGraph) -> Result<Tensor> {
        let z = sgc_features(g, self.k)?;
        if z.cols() != self.weights.rows() {
            return Err(Error::Shape(format!(
                "propagated features have width {}, surrogate expects {}",
                z.cols(),
                self.weights.rows()
            )));
        }
        let mut out = z.matmul(&self.weights);
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + self.bias.get(0, c);
                out.set(r, c, v);
            }
        }
        Ok(out)
    }

    /// Record the surrogate logits with differentiable edge weights.
    pub fn tape_logits(
        &self,
        tape: &mut Tape,
        layout: &MessageLayout,
        features: TensorRef,
        edge_weights: TensorRef,
    ) -> TensorRef {
        let z = sgc_features_tape(tape, layout, features, edge_weights, self.k);
        let w = tape.constant(self.weights.clone());
        let b = tape.constant(self.bias.clone());
        let zw = tape.matmul(z, w);
        tape.add_bias(zw, b)
    }
}

/// Fit the surrogate by cross-entropy against the teacher's argmax labels on
/// all nodes, reporting the final agreement rate.
pub fn train_sgc_surrogate(
    g: &LabeledGraph,
    teacher_logits: &Tensor,
    k: usize,
    cfg: &TrainConfig,
) -> Result<SgcSurrogate> {
    if k == 0 {
        return Err(Error::InvalidArgument("propagation depth K must be at least 1".into()));
    }
    if teacher_logits.rows() != g.num_nodes() {
        return Err(Error::Shape(format!(
            "teacher logits have {} rows for {} nodes",
            teacher_logits.rows(),
            g.num_nodes()
        )));
    }
    let c = teacher_logits.cols();
    let d = g.feature_dim();
    let targets = argmax_labels(teacher_logits);
    let all_rows: Vec<usize> = (0..g.num_nodes()).collect();
    let z = sgc_features(g, k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let limit = (6.0 / (d + c) as f64).sqrt();
    let mut weights = Tensor::from_vec(
        d,
        c,
        (0..d * c).map(|_| rng.random_range(-limit..limit)).collect(),
    );
    let mut bias = Tensor::zeros(1, c);
    let mut adam = Adam::new(d * c + c, cfg.lr);

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let wr = tape.leaf(weights.clone());
        let br = tape.leaf(bias.clone());
        let zr = tape.constant(z.clone());
        let zw = tape.matmul(zr, wr);
        let logits = tape.add_bias(zw, br);
        let loss = tape.cross_entropy(logits, &targets, &all_rows);
        if !tape.value(loss).item().is_finite() {
            return Err(Error::Divergence(epoch));
        }
        let grads = tape.backward(loss, GradientMode::Standard)?;
        adam.begin_step();
        let gw = grads.get(wr);
        let decayed: Vec<f64> = gw
            .data()
            .iter()
            .zip(weights.data())
            .map(|(grad, param)| grad + cfg.weight_decay * param)
            .collect();
        adam.update(0, weights.data_mut(), &decayed);
        adam.update(d * c, bias.data_mut(), grads.get(br).data());
    }

    let mut surrogate = SgcSurrogate { k, weights, bias, agreement: 0.0 };
    let predictions = argmax_labels(&surrogate.logits(g)?);
    let agree = predictions.iter().zip(&targets).filter(|(a, b)| a == b).count();
    surrogate.agreement = agree as f64 / g.num_nodes() as f64;
    Ok(surrogate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;

    fn graph(num_nodes: usize, edges: &[(usize, usize)], features: Tensor) -> LabeledGraph {
        let (g, _) = LabeledGraph::new(
            num_nodes,
            edges.to_vec(),
            features,
            vec![0; num_nodes],
            vec![Split::Train; num_nodes],
            1,
        )
        .unwrap();
        g
    }

    #[test]
    fn edgeless_graph_propagation_is_identity() {
        let x = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = graph(3, &[], x.clone());
        let z = sgc_features(&g, 2).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn two_node_hand_computation() {
        // degrees with self-loops are 2, so every entry of the normalized
        // adjacency is 1/2; unit features are a fixed point
        let g = graph(2, &[(0, 1)], Tensor::ones(2, 1));
        let z = sgc_features(&g, 2).unwrap();
        assert!((z.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((z.get(1, 0) - 1.0).abs() < 1e-12);
        // distinct features average: [1, 3] -> [2, 2] after one step
        let g = graph(2, &[(0, 1)], Tensor::from_vec(2, 1, vec![1.0, 3.0]));
        let z = sgc_features(&g, 1).unwrap();
        assert!((z.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((z.get(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k_zero_is_rejected() {
        let g = graph(2, &[(0, 1)], Tensor::ones(2, 1));
        assert!(sgc_features(&g, 0).is_err());
        assert!(train_sgc_surrogate(&g, &Tensor::ones(2, 2), 0, &TrainConfig::surrogate_default())
            .is_err());
    }

    #[test]
    fn weighted_tape_matches_plain_at_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_vec(5, 3, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect());
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], x);
        let plain = sgc_features(&g, 2).unwrap();
        let layout = MessageLayout::from_graph(&g);
        let mut tape = Tape::new();
        let xr = tape.constant(g.features().clone());
        let wr = tape.constant(Tensor::ones(g.num_edges(), 1));
        let zr = sgc_features_tape(&mut tape, &layout, xr, wr, 2);
        assert!(tape.value(zr).max_abs_diff(&plain) < 1e-10);
    }

    #[test]
    fn surrogate_logits_are_linear_in_features() {
        // doubling X doubles (logit - bias)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::from_vec(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
        let g1 = graph(4, &[(0, 1), (1, 2), (2, 3)], x.clone());
        let g2 = graph(4, &[(0, 1), (1, 2), (2, 3)], x.map(|v| 2.0 * v));
        let sur = SgcSurrogate {
            k: 2,
            weights: Tensor::from_vec(2, 2, vec![0.3, -0.2, 0.5, 0.1]),
            bias: Tensor::from_vec(1, 2, vec![0.7, -0.4]),
            agreement: 1.0,
        };
        let l1 = sur.logits(&g1).unwrap();
        let l2 = sur.logits(&g2).unwrap();
        for r in 0..4 {
            for c in 0..2 {
                let lhs = l2.get(r, c) - sur.bias.get(0, c);
                let rhs = 2.0 * (l1.get(r, c) - sur.bias.get(0, c));
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn distilling_a_realizable_teacher_agrees() {
        // teacher logits produced by an SGC; distilling into another SGC
        // should recover the argmax almost everywhere
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let x = Tensor::from_vec(n, 3, (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect());
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        let g = graph(n, &edges, x);
        let teacher = SgcSurrogate {
            k: 2,
            weights: Tensor::from_vec(3, 2, vec![0.8, -0.3, -0.5, 0.9, 0.2, 0.4]),
            bias: Tensor::from_vec(1, 2, vec![0.05, -0.05]),
            agreement: 1.0,
        };
        let teacher_logits = teacher.logits(&g).unwrap();
        let student =
            train_sgc_surrogate(&g, &teacher_logits, 2, &TrainConfig::surrogate_default()).unwrap();
        assert!(student.agreement >= 0.99, "agreement {}", student.agreement);
    }
}
