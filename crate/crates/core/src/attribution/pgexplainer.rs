//! Parameterized mask predictor: a small MLP over symmetrized endpoint
//! embeddings (from the explained model's last hidden layer) is trained once
//! and then scores any edge independently of the target node.

use super::subgraph::Neighborhood;
use super::{LocalMask, TargetSpec, MODEL_HOPS};
use crate::error::{Error, Result};
use crate::gnn::{argmax_labels, Adam, GatModel};
use crate::graph::{EdgeId, LabeledGraph, Split};
use crate::tape::{GradientMode, Tape, TensorRef};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PgExplainerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_size: f64,
    pub temp_start: f64,
    pub temp_end: f64,
}

impl Default for PgExplainerConfig {
    fn default() -> Self {
        Self { epochs: 20, lr: 0.003, lambda_size: 0.005, temp_start: 5.0, temp_end: 1.0 }
    }
}

const PREDICTOR_HIDDEN: usize = 64;

/// Two-layer perceptron from a symmetrized pair of endpoint embeddings to a
/// single edge logit. Deterministic at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPredictor {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl MaskPredictor {
    pub fn new_random(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Tensor::from_vec(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect(),
            )
        };
        Self {
            w1: glorot(input_dim, PREDICTOR_HIDDEN),
            b1: Tensor::zeros(1, PREDICTOR_HIDDEN),
            w2: glorot(PREDICTOR_HIDDEN, 1),
            b2: Tensor::zeros(1, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn push_params(&self, tape: &mut Tape) -> [TensorRef; 4] {
        [
            tape.leaf(self.w1.clone()),
            tape.leaf(self.b1.clone()),
            tape.leaf(self.w2.clone()),
            tape.leaf(self.b2.clone()),
        ]
    }

    fn tape_logits(&self, tape: &mut Tape, refs: &[TensorRef; 4], inputs: TensorRef) -> TensorRef {
        let h = tape.matmul(inputs, refs[0]);
        let h = tape.add_bias(h, refs[1]);
        let h = tape.leaky_relu(h, 0.0);
        let out = tape.matmul(h, refs[2]);
        tape.add_bias(out, refs[3])
    }

    /// Raw edge logits for a batch of symmetrized inputs.
    pub fn edge_logits(&self, inputs: &Tensor) -> Tensor {
        let mut h = inputs.matmul(&self.w1);
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                let v = (h.get(r, c) + self.b1.get(0, c)).max(0.0);
                h.set(r, c, v);
            }
        }
        let out = h.matmul(&self.w2);
        out.map(|v| v + self.b2.get(0, 0))
    }
}

/// Symmetrized predictor input per edge: `[h_i ‖ h_j] + [h_j ‖ h_i]`, so the
/// unordered endpoint pair determines the row.
fn edge_inputs(hidden: &Tensor, g: &LabeledGraph, edges: &[EdgeId]) -> Tensor {
    let d = hidden.cols();
    let mut out = Tensor::zeros(edges.len(), 2 * d);
    for (r, &e) in edges.iter().enumerate() {
        let (i, j) = g.edge(e).expect("edge id");
        let (hi, hj) = (hidden.row(i), hidden.row(j));
        for c in 0..d {
            out.set(r, c, hi[c] + hj[c]);
            out.set(r, d + c, hj[c] + hi[c]);
        }
    }
    out
}

/// Train the predictor jointly over all train-split nodes: per node the
/// sigmoid-tempered edge logits mask its receptive field and the masked
/// prediction is pulled toward the model's original prediction, plus a size
/// penalty. The temperature anneals geometrically from `temp_start` to
/// `temp_end`; the relaxation is deterministic (no stochastic sampling).
pub fn train_pgexplainer(
    model: &GatModel,
    g: &LabeledGraph,
    cfg: &PgExplainerConfig,
    seed: u64,
) -> Result<MaskPredictor> {
    let hidden = model.hidden_states(g)?;
    let predicted = argmax_labels(&model.logits(g)?);
    let train_nodes = g.split_nodes(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }

    let mut predictor = MaskPredictor::new_random(2 * hidden.cols(), seed);
    let mut adam = Adam::new(
        predictor.w1.len() + predictor.b1.len() + predictor.w2.len() + predictor.b2.len(),
        cfg.lr,
    );

    let neighborhoods: Vec<Neighborhood> = train_nodes
        .iter()
        .map(|&v| Neighborhood::extract(g, v, MODEL_HOPS))
        .collect();

    for epoch in 0..cfg.epochs {
        let ratio = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 1.0 };
        let temp = cfg.temp_start * (cfg.temp_end / cfg.temp_start).powf(ratio);

        let mut grad_acc: [Vec<f64>; 4] = [
            vec![0.0; predictor.w1.len()],
            vec![0.0; predictor.b1.len()],
            vec![0.0; predictor.w2.len()],
            vec![0.0; predictor.b2.len()],
        ];
        let mut total_loss = 0.0;

        for (nb, &v) in neighborhoods.iter().zip(&train_nodes) {
            if nb.num_edges() == 0 {
                continue;
            }
            let mut tape = Tape::new();
            let refs = predictor.push_params(&mut tape);
            let z = tape.constant(edge_inputs(&hidden, g, &nb.edge_ids));
            let elog = predictor.tape_logits(&mut tape, &refs, z);
            let tempered = tape.mul_scalar(elog, 1.0 / temp);
            let mask = tape.sigmoid(tempered);
            let x = tape.constant(nb.features.clone());
            let trace = model.tape_logits(&mut tape, &nb.layout, x, Some(mask));
            let logp = tape.log_softmax_rows(trace.logits);
            let picked = tape.select(logp, nb.center_local, predicted[v]);
            let nll = tape.mul_scalar(picked, -1.0);
            let mean_mask = tape.mean(mask);
            let size_term = tape.mul_scalar(mean_mask, cfg.lambda_size);
            let loss = tape.add(nll, size_term);
            total_loss += tape.value(loss).item();
            let grads = tape.backward(loss, GradientMode::Standard)?;
            for (acc, &r) in grad_acc.iter_mut().zip(&refs) {
                for (a, gval) in acc.iter_mut().zip(grads.get(r).data()) {
                    *a += gval;
                }
            }
        }

        if !total_loss.is_finite() {
            return Err(Error::Divergence(epoch));
        }
        adam.begin_step();
        let mut offset = 0;
        for (tensor, acc) in predictor.params_mut().into_iter().zip(&grad_acc) {
            adam.update(offset, tensor.data_mut(), acc);
            offset += acc.len();
        }
    }
    Ok(predictor)
}

/// Sigmoid predictor scores restricted to the target's receptive field.
/// The predictor never sees the target, so shared edges score identically
/// across targets.
pub fn attr_pgexplainer(
    predictor: &MaskPredictor,
    hidden: &Tensor,
    g: &LabeledGraph,
    target: TargetSpec,
) -> Result<LocalMask> {
    let rf = g.receptive_field(target.node, MODEL_HOPS);
    if rf.is_empty() {
        return LocalMask::new(target, Vec::new());
    }
    let inputs = edge_inputs(hidden, g, &rf);
    let logits = predictor.edge_logits(&inputs);
    let scores = rf
        .iter()
        .enumerate()
        .map(|(r, &e)| (e, 1.0 / (1.0 + (-logits.get(r, 0)).exp())))
        .collect();
    LocalMask::new(target, scores)
}

/// Mean sigmoid mask value over the receptive fields of the given nodes;
/// the quantity the size penalty pushes down during training.
pub fn mean_mask_value(
    predictor: &MaskPredictor,
    hidden: &Tensor,
    g: &LabeledGraph,
    nodes: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for &v in nodes {
        let rf = g.receptive_field(v, MODEL_HOPS);
        if rf.is_empty() {
            continue;
        }
        let inputs = edge_inputs(hidden, g, &rf);
        let logits = predictor.edge_logits(&inputs);
        for r in 0..logits.rows() {
            total += 1.0 / (1.0 + (-logits.get(r, 0)).exp());
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no receptive-field edges among nodes".into()));
    }
    Ok(total / count as f64)
}
