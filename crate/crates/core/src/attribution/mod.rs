//! Edge attribution methods: each produces a non-negative local mask over
//! the target node's receptive field.

mod attention;
mod fastdnx;
mod gnnexplainer;
mod gradient;
mod pgexplainer;
mod subgraph;

pub use attention::{attr_attention, attr_attention_from_table};
pub use fastdnx::attr_fastdnx;
pub use gnnexplainer::{attr_gnnexplainer, GnnExplainerConfig};
pub use gradient::{
    attr_guided_backprop, attr_integrated_gradients, attr_saliency, integrated_gradients_signed,
};
pub use pgexplainer::{
    attr_pgexplainer, mean_mask_value, train_pgexplainer, MaskPredictor, PgExplainerConfig,
};
pub use subgraph::Neighborhood;

use crate::error::{Error, Result};
use crate::gnn::{argmax_labels, GatModel, SgcSurrogate};
use crate::graph::{EdgeId, LabeledGraph};
use crate::seeds::mix_seed;
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Number of message-passing layers of the explained model; receptive
/// fields are taken at this depth.
pub const MODEL_HOPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Att,
    Sa,
    Ig,
    Gb,
    Gnnex,
    Pgex,
    Fdnx,
    Random,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Att,
        Method::Sa,
        Method::Ig,
        Method::Gb,
        Method::Gnnex,
        Method::Pgex,
        Method::Fdnx,
        Method::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Att => "att",
            Method::Sa => "sa",
            Method::Ig => "ig",
            Method::Gb => "gb",
            Method::Gnnex => "gnnex",
            Method::Pgex => "pgex",
            Method::Fdnx => "fdnx",
            Method::Random => "random",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Target of a local explanation: a node and the class whose logit is
/// explained (by default the model's prediction for that node).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub node: usize,
    pub class: usize,
}

/// Non-negative edge attributions over the receptive field of one target.
/// Scores are sorted by edge id; edges outside the support count as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMask {
    pub target: TargetSpec,
    scores: Vec<(EdgeId, f64)>,
}

impl LocalMask {
    pub fn new(target: TargetSpec, mut scores: Vec<(EdgeId, f64)>) -> Result<Self> {
        scores.sort_unstable_by_key(|&(e, _)| e);
        for window in scores.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge id {} in local mask",
                    window[0].0 .0
                )));
            }
        }
        for &(e, s) in &scores {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("score of edge {}", e.0)));
            }
            if s < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative score {s} for edge {}",
                    e.0
                )));
            }
        }
        Ok(Self { target, scores })
    }

    pub fn scores(&self) -> &[(EdgeId, f64)] {
        &self.scores
    }

    pub fn get(&self, e: EdgeId) -> Option<f64> {
        self.scores.binary_search_by_key(&e, |&(id, _)| id).ok().map(|i| self.scores[i].1)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// All nodes of the graph, each targeting the model's predicted class.
pub fn default_targets(model: &GatModel, g: &LabeledGraph) -> Result<Vec<TargetSpec>> {
    let predicted = argmax_labels(&model.logits(g)?);
    Ok((0..g.num_nodes()).map(|v| TargetSpec { node: v, class: predicted[v] }).collect())
}

/// A ready-to-run attribution method. Construct with the helpers below so
/// shared state (attention table, hidden states) is computed once.
pub enum Explainer<'a> {
    Attention { table: Vec<f64> },
    Saliency { model: &'a GatModel },
    IntegratedGradients { model: &'a GatModel, steps: usize },
    GuidedBackprop { model: &'a GatModel },
    GnnExplainer { model: &'a GatModel, config: GnnExplainerConfig, seed: u64 },
    PgExplainer { predictor: &'a MaskPredictor, hidden: Tensor },
    FastDnx { surrogate: &'a SgcSurrogate },
}

impl<'a> Explainer<'a> {
    pub fn attention(model: &GatModel, g: &LabeledGraph) -> Result<Self> {
        Ok(Explainer::Attention { table: model.attention_table(g)? })
    }

    pub fn pg(predictor: &'a MaskPredictor, model: &GatModel, g: &LabeledGraph) -> Result<Self> {
        Ok(Explainer::PgExplainer { predictor, hidden: model.hidden_states(g)? })
    }

    pub fn explain(&self, g: &LabeledGraph, target: TargetSpec) -> Result<LocalMask> {
        if target.node >= g.num_nodes() {
            return Err(Error::NodeOutOfRange { index: target.node, num_nodes: g.num_nodes() });
        }
        if target.class >= g.class_count() {
            return Err(Error::LabelOutOfRange {
                label: target.class,
                class_count: g.class_count(),
            });
        }
        match self {
            Explainer::Attention { table } => attr_attention_from_table(table, g, target),
            Explainer::Saliency { model } => attr_saliency(model, g, target),
            Explainer::IntegratedGradients { model, steps } => {
                attr_integrated_gradients(model, g, target, *steps)
            }
            Explainer::GuidedBackprop { model } => attr_guided_backprop(model, g, target),
            Explainer::GnnExplainer { model, config, seed } => {
                attr_gnnexplainer(model, g, target, config, mix_seed(*seed, target.node as u64))
            }
            Explainer::PgExplainer { predictor, hidden } => {
                attr_pgexplainer(predictor, hidden, g, target)
            }
            Explainer::FastDnx { surrogate } => attr_fastdnx(surrogate, g, target),
        }
    }
}

/// Explain every target, dispatching to a worker pool. Results come back in
/// target order regardless of completion order, and per-target seeds are
/// derived from the target node, so the output is schedule-independent.
pub fn explain_all(
    explainer: &Explainer,
    g: &LabeledGraph,
    targets: &[TargetSpec],
) -> Result<Vec<LocalMask>> {
    targets
        .par_iter()
        .map(|&t| explainer.explain(g, t))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct MaskRecord {
    v: usize,
    t: usize,
    scores: Vec<(usize, f64)>,
}

/// Write a batch of local masks: a JSON sequence of `{v, t, scores}` with
/// `scores = [[edge_id, score], ...]`.
pub fn save_masks(path: impl AsRef<Path>, masks: &[LocalMask]) -> Result<()> {
    let records: Vec<MaskRecord> = masks
        .iter()
        .map(|m| MaskRecord {
            v: m.target.node,
            t: m.target.class,
            scores: m.scores.iter().map(|&(e, s)| (e.0, s)).collect(),
        })
        .collect();
    std::fs::write(path, serde_json::to_string(&records)?)?;
    Ok(())
}

pub fn load_masks(path: impl AsRef<Path>, g: &LabeledGraph) -> Result<Vec<LocalMask>> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<MaskRecord> = serde_json::from_str(&text)?;
    records
        .into_iter()
        .map(|r| {
            let scores = r
                .scores
                .into_iter()
                .map(|(id, s)| {
                    if id >= g.num_edges() {
                        return Err(Error::UnknownEdge(id));
                    }
                    Ok((EdgeId(id), s))
                })
                .collect::<Result<Vec<_>>>()?;
            LocalMask::new(TargetSpec { node: r.v, class: r.t }, scores)
        })
        .collect()
}
