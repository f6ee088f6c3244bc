//! Gradient-based attributions: saliency, integrated gradients and guided
//! backpropagation, all with respect to the injected edge weights.

use super::subgraph::Neighborhood;
use super::{LocalMask, TargetSpec, MODEL_HOPS};
use crate::error::{Error, Result};
use crate::gnn::GatModel;
use crate::graph::{EdgeId, LabeledGraph};
use crate::tape::{GradientMode, Tape};
use crate::tensor::Tensor;

/// Gradient of the target-class logit at the center with respect to the
/// receptive-field edge weights, evaluated at weight values `at`.
fn logit_gradient(
    model: &GatModel,
    nb: &Neighborhood,
    target: TargetSpec,
    at: &[f64],
    mode: GradientMode,
) -> Result<(Vec<f64>, f64)> {
    let mut tape = Tape::new();
    let w = tape.leaf(Tensor::vector(at.to_vec()));
    let x = tape.constant(nb.features.clone());
    let trace = model.tape_logits(&mut tape, &nb.layout, x, Some(w));
    let logit = tape.select(trace.logits, nb.center_local, target.class);
    let value = tape.value(logit).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("target logit".into()));
    }
    let grads = tape.backward(logit, mode)?;
    let grad = grads.get(w).data().to_vec();
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("edge-weight gradient".into()));
    }
    Ok((grad, value))
}

fn gradient_mask(
    model: &GatModel,
    g: &LabeledGraph,
    target: TargetSpec,
    mode: GradientMode,
) -> Result<LocalMask> {
    let nb = Neighborhood::extract(g, target.node, MODEL_HOPS);
    if nb.num_edges() == 0 {
        return LocalMask::new(target, Vec::new());
    }
    let ones = vec![1.0; nb.num_edges()];
    let (grad, _) = logit_gradient(model, &nb, target, &ones, mode)?;
    let scores = nb.edge_ids.iter().zip(&grad).map(|(&e, &g)| (e, g.abs())).collect();
    LocalMask::new(target, scores)
}

/// Absolute gradient of the target logit with respect to each edge weight,
/// evaluated at all-ones.
pub fn attr_saliency(model: &GatModel, g: &LabeledGraph, target: TargetSpec) -> Result<LocalMask> {
    gradient_mask(model, g, target, GradientMode::Standard)
}

/// Saliency with negative upstream gradients clipped at every rectifier
/// during backpropagation.
pub fn attr_guided_backprop(
    model: &GatModel,
    g: &LabeledGraph,
    target: TargetSpec,
) -> Result<LocalMask> {
    gradient_mask(model, g, target, GradientMode::Guided)
}

/// Signed integrated gradients along the straight path from the all-zeros
/// baseline to all-ones, as a midpoint Riemann sum. Returns the signed
/// attribution per receptive-field edge plus the logits at the path ends
/// (for the completeness identity: the attributions sum to their difference).
pub fn integrated_gradients_signed(
    model: &GatModel,
    g: &LabeledGraph,
    target: TargetSpec,
    steps: usize,
) -> Result<(Vec<(EdgeId, f64)>, f64, f64)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("integrated gradients need steps >= 1".into()));
    }
    let nb = Neighborhood::extract(g, target.node, MODEL_HOPS);
    let (_, logit_at_zero) =
        logit_gradient(model, &nb, target, &vec![0.0; nb.num_edges()], GradientMode::Standard)?;
    let (_, logit_at_one) =
        logit_gradient(model, &nb, target, &vec![1.0; nb.num_edges()], GradientMode::Standard)?;
    let mut acc = vec![0.0; nb.num_edges()];
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        let at = vec![alpha; nb.num_edges()];
        let (grad, _) = logit_gradient(model, &nb, target, &at, GradientMode::Standard)?;
        for (a, g) in acc.iter_mut().zip(&grad) {
            *a += g / steps as f64;
        }
    }
    let signed = nb.edge_ids.iter().zip(&acc).map(|(&e, &v)| (e, v)).collect();
    Ok((signed, logit_at_one, logit_at_zero))
}

/// Absolute value of the integrated-gradients path integral per edge.
pub fn attr_integrated_gradients(
    model: &GatModel,
    g: &LabeledGraph,
    target: TargetSpec,
    steps: usize,
) -> Result<LocalMask> {
    let (signed, _, _) = integrated_gradients_signed(model, g, target, steps)?;
    let scores = signed.into_iter().map(|(e, v)| (e, v.abs())).collect();
    LocalMask::new(target, scores)
}
