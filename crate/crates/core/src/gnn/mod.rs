//! Two-layer graph attention model with per-edge weight injection.
//!
//! Every undirected edge contributes two directed messages and every node
//! always receives a self-message whose multiplier is fixed at 1. Injected
//! edge weights multiply the post-softmax attention coefficients while the
//! softmax normalization itself stays untouched: a zero weight suppresses
//! exactly that message's contribution, all-ones weights reproduce the
//! unweighted forward pass bit for bit, and the model output varies smoothly
//! along any straight path in weight space (which gradient-path attributions
//! rely on).

mod sgc;
mod train;

pub use sgc::{sgc_features, sgc_features_tape, train_sgc_surrogate, SgcSurrogate};
pub use train::{accuracy, train_gat, Adam, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::graph::{EdgeWeights, LabeledGraph};
use crate::tape::{Tape, TensorRef};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Directed message bookkeeping for a node set and canonical edge list.
/// Message order: the two directions of each edge in edge order, then one
/// self-message per node.
#[derive(Debug, Clone)]
pub struct MessageLayout {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Edge index of each of the first `2 * num_edges` messages.
    pub edge_dup: Vec<usize>,
}

impl MessageLayout {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut src = Vec::with_capacity(2 * edges.len() + num_nodes);
        let mut dst = Vec::with_capacity(2 * edges.len() + num_nodes);
        let mut edge_dup = Vec::with_capacity(2 * edges.len());
        for (idx, &(i, j)) in edges.iter().enumerate() {
            src.push(i);
            dst.push(j);
            src.push(j);
            dst.push(i);
            edge_dup.push(idx);
            edge_dup.push(idx);
        }
        for u in 0..num_nodes {
            src.push(u);
            dst.push(u);
        }
        Self { num_nodes, num_edges: edges.len(), src, dst, edge_dup }
    }

    pub fn from_graph(g: &LabeledGraph) -> Self {
        Self::new(g.num_nodes(), g.edges())
    }

    pub fn num_messages(&self) -> usize {
        self.src.len()
    }

    /// Destination node of each directed edge message (self-messages excluded).
    pub fn edge_msg_dst(&self) -> &[usize] {
        &self.dst[..2 * self.num_edges]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub feature_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub class_count: usize,
    pub leaky_slope: f64,
}

impl GatConfig {
    pub fn for_graph(g: &LabeledGraph, hidden: usize, heads: usize) -> Self {
        Self {
            feature_dim: g.feature_dim(),
            hidden,
            heads,
            class_count: g.class_count(),
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatParams {
    pub w1: Vec<Tensor>,
    pub a1_src: Vec<Tensor>,
    pub a1_dst: Vec<Tensor>,
    pub w2: Tensor,
    pub a2_src: Tensor,
    pub a2_dst: Tensor,
}

/// Tape handles of the model parameters, in optimizer order.
pub struct GatParamRefs {
    pub w1: Vec<TensorRef>,
    pub a1_src: Vec<TensorRef>,
    pub a1_dst: Vec<TensorRef>,
    pub w2: TensorRef,
    pub a2_src: TensorRef,
    pub a2_dst: TensorRef,
}

impl GatParamRefs {
    pub fn ordered(&self) -> Vec<TensorRef> {
        let mut out = Vec::new();
        out.extend(&self.w1);
        out.extend(&self.a1_src);
        out.extend(&self.a1_dst);
        out.push(self.w2);
        out.push(self.a2_src);
        out.push(self.a2_dst);
        out
    }
}

/// Per-epoch dropout masks (inverted dropout, entries 0 or 1/(1-p)).
/// Applied to attention coefficients of both layers and to the hidden
/// activations between them; never used outside training.
pub struct DropoutPlan {
    pub attn1: Vec<Tensor>,
    pub attn2: Tensor,
    pub hidden: Tensor,
}

impl DropoutPlan {
    pub fn sample(
        rng: &mut ChaCha8Rng,
        layout: &MessageLayout,
        heads: usize,
        hidden_width: usize,
        p: f64,
    ) -> Self {
        let mut mask = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                .collect();
            Tensor::from_vec(rows, cols, data)
        };
        let m = layout.num_messages();
        let attn1 = (0..heads).map(|_| mask(m, 1)).collect();
        let attn2 = mask(m, 1);
        let hidden = mask(layout.num_nodes, hidden_width);
        Self { attn1, attn2, hidden }
    }
}

/// Forward-pass handles: final logits, post-softmax attention coefficients
/// per head (layer-1 heads first, then the single layer-2 head), and the
/// layer-1 hidden output.
pub struct GatTrace {
    pub logits: TensorRef,
    pub attention: Vec<TensorRef>,
    pub hidden: TensorRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatModel {
    pub config: GatConfig,
    pub params: GatParams,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect())
}

impl GatModel {
    pub fn new_random(config: GatConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h, k, c) = (config.feature_dim, config.hidden, config.heads, config.class_count);
        let params = GatParams {
            w1: (0..k).map(|_| glorot(&mut rng, d, h)).collect(),
            a1_src: (0..k).map(|_| glorot(&mut rng, h, 1)).collect(),
            a1_dst: (0..k).map(|_| glorot(&mut rng, h, 1)).collect(),
            w2: glorot(&mut rng, k * h, c),
            a2_src: glorot(&mut rng, c, 1),
            a2_dst: glorot(&mut rng, c, 1),
        };
        Self { config, params }
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let p = &self.params;
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(p.w1.iter());
        out.extend(p.a1_src.iter());
        out.extend(p.a1_dst.iter());
        out.push(&p.w2);
        out.push(&p.a2_src);
        out.push(&p.a2_dst);
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let p = &mut self.params;
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(p.w1.iter_mut());
        out.extend(p.a1_src.iter_mut());
        out.extend(p.a1_dst.iter_mut());
        out.push(&mut p.w2);
        out.push(&mut p.a2_src);
        out.push(&mut p.a2_dst);
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    /// Push the current parameter values onto a tape as leaves.
    pub fn push_params(&self, tape: &mut Tape) -> GatParamRefs {
        GatParamRefs {
            w1: self.params.w1.iter().map(|t| tape.leaf(t.clone())).collect(),
            a1_src: self.params.a1_src.iter().map(|t| tape.leaf(t.clone())).collect(),
            a1_dst: self.params.a1_dst.iter().map(|t| tape.leaf(t.clone())).collect(),
            w2: tape.leaf(self.params.w2.clone()),
            a2_src: tape.leaf(self.params.a2_src.clone()),
            a2_dst: tape.leaf(self.params.a2_dst.clone()),
        }
    }

    fn attention_head(
        &self,
        tape: &mut Tape,
        layout: &MessageLayout,
        x: TensorRef,
        w: TensorRef,
        a_src: TensorRef,
        a_dst: TensorRef,
        wmsg: Option<TensorRef>,
        attn_mask: Option<&Tensor>,
    ) -> (TensorRef, TensorRef) {
        let h = tape.matmul(x, w);
        let s_src = tape.matmul(h, a_src);
        let s_dst = tape.matmul(h, a_dst);
        let e_src = tape.gather_rows(s_src, &layout.src);
        let e_dst = tape.gather_rows(s_dst, &layout.dst);
        let e = tape.add(e_src, e_dst);
        let e = tape.leaky_relu(e, self.config.leaky_slope);
        let p = tape.segment_softmax(e, &layout.dst);
        // injected weights scale the post-softmax coefficients; the softmax
        // denominators stay intact so the output is smooth in w
        let alpha = match wmsg {
            Some(wm) => tape.mul(p, wm),
            None => p,
        };
        let coeff = alpha;
        let alpha = match attn_mask {
            Some(mask) => {
                let m = tape.constant(mask.clone());
                tape.mul(alpha, m)
            }
            None => alpha,
        };
        let gathered = tape.gather_rows(h, &layout.src);
        let msgs = tape.scale_rows(gathered, alpha);
        let out = tape.scatter_add_rows(msgs, &layout.dst, layout.num_nodes);
        (out, coeff)
    }

    /// Record the full two-layer forward pass on `tape`.
    /// `edge_weights` is a `num_edges x 1` tape tensor or `None` for the
    /// plain unweighted pass.
    pub fn tape_logits_with(
        &self,
        tape: &mut Tape,
        refs: &GatParamRefs,
        layout: &MessageLayout,
        features: TensorRef,
        edge_weights: Option<TensorRef>,
        dropout: Option<&DropoutPlan>,
    ) -> GatTrace {
        let wmsg = edge_weights.map(|w| {
            let we = tape.gather_rows(w, &layout.edge_dup);
            let ones = tape.constant(Tensor::ones(layout.num_nodes, 1));
            tape.concat_rows(&[we, ones])
        });

        let mut attention = Vec::with_capacity(self.config.heads + 1);
        let mut head_outs = Vec::with_capacity(self.config.heads);
        for head in 0..self.config.heads {
            let mask = dropout.map(|p| &p.attn1[head]);
            let (out, coeff) = self.attention_head(
                tape,
                layout,
                features,
                refs.w1[head],
                refs.a1_src[head],
                refs.a1_dst[head],
                wmsg,
                mask,
            );
            attention.push(coeff);
            head_outs.push(out);
        }
        let cat = tape.concat_cols(&head_outs);
        let hidden = tape.elu(cat, 1.0);
        let layer2_in = match dropout {
            Some(plan) => {
                let m = tape.constant(plan.hidden.clone());
                tape.mul(hidden, m)
            }
            None => hidden,
        };
        let (logits, coeff2) = self.attention_head(
            tape,
            layout,
            layer2_in,
            refs.w2,
            refs.a2_src,
            refs.a2_dst,
            wmsg,
            dropout.map(|p| &p.attn2),
        );
        attention.push(coeff2);
        GatTrace { logits, attention, hidden }
    }

    /// Convenience: parameters as constants, no dropout.
    pub fn tape_logits(
        &self,
        tape: &mut Tape,
        layout: &MessageLayout,
        features: TensorRef,
        edge_weights: Option<TensorRef>,
    ) -> GatTrace {
        let refs = self.push_params(tape);
        self.tape_logits_with(tape, &refs, layout, features, edge_weights, None)
    }

    fn check_graph(&self, g: &LabeledGraph) -> Result<()> {
        if g.feature_dim() != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "graph features have width {}, model expects {}",
                g.feature_dim(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    /// Logits of the unweighted forward pass over the whole graph.
    pub fn logits(&self, g: &LabeledGraph) -> Result<Tensor> {
        self.check_graph(g)?;
        let layout = MessageLayout::from_graph(g);
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let trace = self.tape_logits(&mut tape, &layout, x, None);
        Ok(tape.value(trace.logits).clone())
    }

    /// Logits with injected edge weight multipliers.
    pub fn logits_weighted(&self, g: &LabeledGraph, weights: &EdgeWeights) -> Result<Tensor> {
        self.check_graph(g)?;
        if weights.len() != g.num_edges() {
            return Err(Error::Shape(format!(
                "{} edge weights for {} edges",
                weights.len(),
                g.num_edges()
            )));
        }
        let layout = MessageLayout::from_graph(g);
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let w = tape.constant(Tensor::vector(weights.values().to_vec()));
        let trace = self.tape_logits(&mut tape, &layout, x, Some(w));
        let out = tape.value(trace.logits).clone();
        if !out.is_finite() {
            return Err(Error::NonFinite("weighted forward logits".into()));
        }
        Ok(out)
    }

    /// Layer-1 hidden states (post-activation) of the unweighted pass,
    /// `num_nodes x (heads * hidden)`.
    pub fn hidden_states(&self, g: &LabeledGraph) -> Result<Tensor> {
        self.check_graph(g)?;
        let layout = MessageLayout::from_graph(g);
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let trace = self.tape_logits(&mut tape, &layout, x, None);
        Ok(tape.value(trace.hidden).clone())
    }

    /// Mean post-softmax attention per canonical edge, averaged over all
    /// layers, heads and both directions of the unweighted forward pass.
    pub fn attention_table(&self, g: &LabeledGraph) -> Result<Vec<f64>> {
        self.check_graph(g)?;
        let layout = MessageLayout::from_graph(g);
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let trace = self.tape_logits(&mut tape, &layout, x, None);
        let mut table = vec![0.0; g.num_edges()];
        for &coeff in &trace.attention {
            let values = tape.value(coeff);
            for (msg, &edge) in layout.edge_dup.iter().enumerate() {
                table[edge] += values.data()[msg];
            }
        }
        let denom = (2 * trace.attention.len()) as f64;
        for v in &mut table {
            *v /= denom;
        }
        Ok(table)
    }
}

/// Per-row argmax labels; ties break toward the smallest class index.
pub fn argmax_labels(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows()).map(|r| logits.argmax_row(r)).collect()
}

#[derive(Serialize, Deserialize)]
struct GatCheckpoint {
    model: GatModel,
    train_config: TrainConfig,
}

/// Save a model checkpoint as JSON: shape-annotated flat parameter arrays
/// plus the training configuration. Round-trips bit-exactly.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &GatModel,
    train_config: &TrainConfig,
) -> Result<()> {
    let file = GatCheckpoint { model: model.clone(), train_config: train_config.clone() };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GatModel, TrainConfig)> {
    let text = std::fs::read_to_string(path)?;
    let file: GatCheckpoint = serde_json::from_str(&text)?;
    Ok((file.model, file.train_config))
}
