//! Learned per-edge mask: sigmoid edge logits over the receptive field are
//! used as injected weights and optimized to keep the target prediction
//! while staying small and near-binary.

use super::subgraph::Neighborhood;
use super::{LocalMask, TargetSpec, MODEL_HOPS};
use crate::error::{Error, Result};
use crate::gnn::{Adam, GatModel};
use crate::graph::LabeledGraph;
use crate::tape::{GradientMode, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnExplainerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_size: f64,
    pub lambda_entropy: f64,
}

impl Default for GnnExplainerConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 0.01, lambda_size: 0.005, lambda_entropy: 0.1 }
    }
}

fn sample_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller; u1 in (0, 1]
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Optimize per-edge logits over the receptive field; the returned scores
/// are the final sigmoid mask values, all in (0, 1).
pub fn attr_gnnexplainer(
    model: &GatModel,
    g: &LabeledGraph,
    target: TargetSpec,
    cfg: &GnnExplainerConfig,
    seed: u64,
) -> Result<LocalMask> {
    let nb = Neighborhood::extract(g, target.node, MODEL_HOPS);
    if nb.num_edges() == 0 {
        return LocalMask::new(target, Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta =
        Tensor::vector((0..nb.num_edges()).map(|_| sample_normal(&mut rng, 0.1)).collect());
    let mut adam = Adam::new(theta.len(), cfg.lr);

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let th = tape.leaf(theta.clone());
        let mask = tape.sigmoid(th);
        let x = tape.constant(nb.features.clone());
        let trace = model.tape_logits(&mut tape, &nb.layout, x, Some(mask));
        let logp = tape.log_softmax_rows(trace.logits);
        let picked = tape.select(logp, nb.center_local, target.class);
        let nll = tape.mul_scalar(picked, -1.0);
        let mean_mask = tape.mean(mask);
        let size_term = tape.mul_scalar(mean_mask, cfg.lambda_size);
        let ent = tape.binary_entropy(mask);
        let mean_ent = tape.mean(ent);
        let ent_term = tape.mul_scalar(mean_ent, cfg.lambda_entropy);
        let partial = tape.add(nll, size_term);
        let loss = tape.add(partial, ent_term);
        if !tape.value(loss).item().is_finite() {
            return Err(Error::Divergence(epoch));
        }
        let grads = tape.backward(loss, GradientMode::Standard)?;
        adam.begin_step();
        adam.update(0, theta.data_mut(), grads.get(th).data());
    }

    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let scores = nb
        .edge_ids
        .iter()
        .zip(theta.data())
        .map(|(&e, &t)| (e, sigmoid(t)))
        .collect();
    LocalMask::new(target, scores)
}
