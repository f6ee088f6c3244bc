//! Seeded training loop: Adam with weight decay, dropout during training
//! only, early stopping on validation accuracy with a patience budget.

use super::{DropoutPlan, GatConfig, GatModel, MessageLayout};
use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, Split};
use crate::tape::{GradientMode, Tape};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            weight_decay: 5e-4,
            max_epochs: 600,
            patience: 600,
            seed: 0,
            hidden: 8,
            heads: 8,
            dropout: 0.3,
        }
    }
}

impl TrainConfig {
    /// Defaults for fitting the linear surrogate; no dropout, light decay.
    pub fn surrogate_default() -> Self {
        Self {
            lr: 5e-2,
            weight_decay: 1e-6,
            max_epochs: 400,
            patience: 400,
            seed: 0,
            hidden: 0,
            heads: 0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub val_curve: Vec<f64>,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Adam over a flat parameter vector, updated slice by slice.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Update `params[..]` in place from `grads`, using optimizer state at
    /// `offset`. Call `begin_step` once per optimization step.
    pub fn update(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let i = offset + k;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Fraction of `split` nodes whose argmax logit equals their label; argmax
/// ties break toward the smallest class index.
pub fn accuracy(logits: &Tensor, g: &LabeledGraph, split: Split) -> Result<f64> {
    if logits.rows() != g.num_nodes() || logits.cols() != g.class_count() {
        return Err(Error::Shape(format!(
            "logits are {}x{}, expected {}x{}",
            logits.rows(),
            logits.cols(),
            g.num_nodes(),
            g.class_count()
        )));
    }
    let nodes = g.split_nodes(split);
    if nodes.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let correct = nodes
        .iter()
        .filter(|&&v| logits.argmax_row(v) == g.labels()[v])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Train the attention model on the train split, early-stopping on
/// validation accuracy, and return the best-validation checkpoint.
pub fn train_gat(g: &LabeledGraph, cfg: &TrainConfig) -> Result<(GatModel, TrainReport)> {
    let train_nodes = g.split_nodes(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if g.split_nodes(Split::Val).is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }

    let config = GatConfig::for_graph(g, cfg.hidden, cfg.heads);
    let mut model = GatModel::new_random(config, cfg.seed);
    let layout = MessageLayout::from_graph(g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(model.num_params(), cfg.lr);

    let mut best_params = model.params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0usize;
    let mut val_curve = Vec::new();
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let plan = (cfg.dropout > 0.0).then(|| {
            DropoutPlan::sample(
                &mut rng,
                &layout,
                model.config.heads,
                model.config.heads * model.config.hidden,
                cfg.dropout,
            )
        });

        let mut tape = Tape::new();
        let refs = model.push_params(&mut tape);
        let x = tape.constant(g.features().clone());
        let trace = model.tape_logits_with(&mut tape, &refs, &layout, x, None, plan.as_ref());
        let loss = tape.cross_entropy(trace.logits, g.labels(), &train_nodes);
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Divergence(epoch));
        }
        let grads = tape.backward(loss, GradientMode::Standard)?;

        adam.begin_step();
        let ordered = refs.ordered();
        let mut offset = 0;
        for (tensor, r) in model.param_tensors_mut().into_iter().zip(ordered) {
            let g_t = grads.get(r);
            let decayed: Vec<f64> = g_t
                .data()
                .iter()
                .zip(tensor.data())
                .map(|(grad, param)| grad + cfg.weight_decay * param)
                .collect();
            adam.update(offset, tensor.data_mut(), &decayed);
            offset += decayed.len();
        }

        let eval_logits = model.logits(g)?;
        let val_acc = accuracy(&eval_logits, g, Split::Val)?;
        val_curve.push(val_acc);
        if val_acc > best_val {
            best_val = val_acc;
            best_params = model.params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            if val_acc == best_val {
                // on a tie keep the longer-trained checkpoint; the patience
                // counter still runs from the last strict improvement
                best_params = model.params.clone();
                best_epoch = epoch;
            }
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    let test_accuracy = accuracy(&model.logits(g)?, g, Split::Test)?;
    Ok((model, TrainReport { val_curve, test_accuracy, best_epoch, epochs_run }))
}
