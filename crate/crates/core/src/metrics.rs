//! Evaluation harness: accuracy-vs-pruning curves, tied-rank tables over
//! methods, fidelity of 50%-pruned graphs and the random-baseline band.

use crate::aggregate::{hard_mask, random_attribution, AggregationMode, GlobalMask};
use crate::attribution::Method;
use crate::error::{Error, Result};
use crate::gnn::{accuracy, argmax_labels, GatModel};
use crate::graph::{LabeledGraph, Split};
use crate::seeds::mix_seed;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// The standard pruning grid: 5, 10, ..., 100.
pub fn default_grid() -> Vec<u32> {
    (1..=20).map(|i| i * 5).collect()
}

/// Test accuracy as a function of the removed-edge percentage, plus the
/// unpruned reference accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneCurve {
    pub method: Method,
    pub mode: AggregationMode,
    pub reference: f64,
    pub points: Vec<(u32, f64)>,
}

impl PruneCurve {
    pub fn accuracy_at(&self, p: u32) -> Option<f64> {
        self.points.iter().find(|&&(q, _)| q == p).map(|&(_, a)| a)
    }
}

/// Evaluate test accuracy on the graph pruned at every grid percentage.
pub fn pruning_curve(
    model: &GatModel,
    g: &LabeledGraph,
    gm: &GlobalMask,
    method: Method,
    mode: AggregationMode,
    grid: &[u32],
) -> Result<PruneCurve> {
    let reference = accuracy(&model.logits(g)?, g, Split::Test)?;
    let mut points = Vec::with_capacity(grid.len());
    for &p in grid {
        let hm = hard_mask(gm, p as f64)?;
        let pruned = g.prune(&hm.keep)?;
        let acc = accuracy(&model.logits(&pruned)?, &pruned, Split::Test)?;
        points.push((p, acc));
    }
    Ok(PruneCurve { method, mode, reference, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityVariant {
    /// |logit difference| of the originally predicted class, per node.
    PredictedClassAbs,
    /// L1 distance over all class logits, per node.
    L1AllLogits,
}

/// Per-node output differences between the original graph and its pruned
/// variant at `percent`, for all nodes. Predicted classes come from the
/// original graph.
pub fn fidelity_minus_per_node(
    model: &GatModel,
    g: &LabeledGraph,
    gm: &GlobalMask,
    percent: f64,
    variant: FidelityVariant,
) -> Result<Vec<f64>> {
    let original = model.logits(g)?;
    let predicted = argmax_labels(&original);
    let hm = hard_mask(gm, percent)?;
    let pruned_graph = g.prune(&hm.keep)?;
    let pruned = model.logits(&pruned_graph)?;
    Ok((0..g.num_nodes())
        .map(|v| match variant {
            FidelityVariant::PredictedClassAbs => {
                (original.get(v, predicted[v]) - pruned.get(v, predicted[v])).abs()
            }
            FidelityVariant::L1AllLogits => (0..g.class_count())
                .map(|c| (original.get(v, c) - pruned.get(v, c)).abs())
                .sum(),
        })
        .collect())
}

/// Mean absolute change of each node's originally-predicted-class logit
/// after removing the 50% lowest-scored edges. Lower means the mask marked
/// genuinely unimportant edges.
pub fn fidelity_minus(model: &GatModel, g: &LabeledGraph, gm: &GlobalMask) -> Result<f64> {
    fidelity_minus_at(model, g, gm, 50.0, FidelityVariant::PredictedClassAbs)
}

pub fn fidelity_minus_at(
    model: &GatModel,
    g: &LabeledGraph,
    gm: &GlobalMask,
    percent: f64,
    variant: FidelityVariant,
) -> Result<f64> {
    let per_node = fidelity_minus_per_node(model, g, gm, percent, variant)?;
    Ok(per_node.iter().sum::<f64>() / per_node.len().max(1) as f64)
}

/// Mean rank (1 = best accuracy) of each curve over the shared grid; equal
/// accuracies share the average of their tied ranks.
pub fn average_ranks(curves: &[&PruneCurve]) -> Result<Vec<(Method, f64)>> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("average_ranks needs at least one curve".into()));
    };
    let grid: Vec<u32> = first.points.iter().map(|&(p, _)| p).collect();
    for c in curves {
        let this: Vec<u32> = c.points.iter().map(|&(p, _)| p).collect();
        if this != grid {
            return Err(Error::InvalidArgument(format!(
                "curve {} has a mismatched pruning grid",
                c.method
            )));
        }
    }
    let mut totals = vec![0.0; curves.len()];
    for (pi, _) in grid.iter().enumerate() {
        for (ci, rank) in ranks_at(curves, pi).into_iter().enumerate() {
            totals[ci] += rank;
        }
    }
    Ok(curves
        .iter()
        .zip(totals)
        .map(|(c, t)| (c.method, t / grid.len() as f64))
        .collect())
}

/// Tied ranks (1 = highest accuracy) of the curves at grid index `pi`.
pub fn ranks_at(curves: &[&PruneCurve], pi: usize) -> Vec<f64> {
    let accs: Vec<f64> = curves.iter().map(|c| c.points[pi].1).collect();
    let mut order: Vec<usize> = (0..accs.len()).collect();
    order.sort_by(|&a, &b| accs[b].total_cmp(&accs[a]));
    let mut ranks = vec![0.0; accs.len()];
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && accs[order[end]] == accs[order[pos]] {
            end += 1;
        }
        // ranks pos+1 ..= end averaged over the tie group
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &ci in &order[pos..end] {
            ranks[ci] = avg;
        }
        pos = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub p: u32,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomBand {
    pub reference: f64,
    pub points: Vec<BandPoint>,
    /// Mean curve across trials, usable in rank tables.
    pub mean_curve: PruneCurve,
}

/// Envelope and mean of a set of random-trial curves sharing one grid.
pub fn band_from_trials(curves: &[PruneCurve]) -> Result<RandomBand> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("random baseline needs at least one trial".into()));
    };
    let reference = first.reference;
    let grid: Vec<u32> = first.points.iter().map(|&(p, _)| p).collect();
    for c in curves {
        let this: Vec<u32> = c.points.iter().map(|&(p, _)| p).collect();
        if this != grid {
            return Err(Error::InvalidArgument("random trials on mismatched grids".into()));
        }
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut mean_points = Vec::with_capacity(grid.len());
    for (pi, &p) in grid.iter().enumerate() {
        let accs: Vec<f64> = curves.iter().map(|c| c.points[pi].1).collect();
        let min = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        points.push(BandPoint { p, min, mean, max });
        mean_points.push((p, mean));
    }
    let mean_curve = PruneCurve {
        method: Method::Random,
        mode: AggregationMode::Sum,
        reference,
        points: mean_points,
    };
    Ok(RandomBand { reference, points, mean_curve })
}

/// Accuracy envelope of `trials` independent random attributions; trial
/// seeds derive from `base_seed`.
pub fn random_baseline_band(
    model: &GatModel,
    g: &LabeledGraph,
    trials: usize,
    base_seed: u64,
    grid: &[u32],
) -> Result<RandomBand> {
    if trials == 0 {
        return Err(Error::InvalidArgument("random baseline needs at least one trial".into()));
    }
    let mut curves = Vec::with_capacity(trials);
    for t in 0..trials {
        let gm = random_attribution(g, mix_seed(base_seed, t as u64));
        curves.push(pruning_curve(
            model,
            g,
            &gm,
            Method::Random,
            AggregationMode::Sum,
            grid,
        )?);
    }
    band_from_trials(&curves)
}

// ---------------------------------------------------------------------------
// report files

/// Curve CSV: `method,mode,p,accuracy` with a `p=0` reference row per curve.
pub fn save_curves(path: impl AsRef<Path>, curves: &[PruneCurve]) -> Result<()> {
    let mut out = String::from("method,mode,p,accuracy\n");
    for c in curves {
        out.push_str(&format!("{},{},0,{}\n", c.method, c.mode, c.reference));
        for &(p, acc) in &c.points {
            out.push_str(&format!("{},{},{p},{acc}\n", c.method, c.mode));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_curves(path: impl AsRef<Path>) -> Result<Vec<PruneCurve>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("method,mode,p,accuracy") => {}
        other => return Err(Error::Csv(format!("bad curves header: {other:?}"))),
    }
    let mut curves: Vec<PruneCurve> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Csv(format!("line {}: expected 4 fields", lineno + 2)));
        }
        let method: Method = fields[0].parse()?;
        let mode: AggregationMode = fields[1].parse()?;
        let p: u32 = fields[2]
            .parse()
            .map_err(|_| Error::Csv(format!("line {}: bad percentage", lineno + 2)))?;
        let acc: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Csv(format!("line {}: bad accuracy", lineno + 2)))?;
        let current = match curves.last_mut() {
            Some(c) if c.method == method && c.mode == mode => c,
            _ => {
                curves.push(PruneCurve { method, mode, reference: f64::NAN, points: Vec::new() });
                curves.last_mut().unwrap()
            }
        };
        if p == 0 {
            current.reference = acc;
        } else {
            current.points.push((p, acc));
        }
    }
    Ok(curves)
}

/// Band CSV: `p,min,mean,max`.
pub fn save_band(path: impl AsRef<Path>, band: &RandomBand) -> Result<()> {
    let mut out = String::from("p,min,mean,max\n");
    out.push_str(&format!("0,{r},{r},{r}\n", r = band.reference));
    for b in &band.points {
        out.push_str(&format!("{},{},{},{}\n", b.p, b.min, b.mean, b.max));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean rank per method and aggregation mode; serializes as
/// `{method: {"avg": r, "sum": r}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankReport(pub BTreeMap<String, ModeRanks>);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeRanks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sum: Option<f64>,
}

impl RankReport {
    pub fn insert(&mut self, method: Method, mode: AggregationMode, rank: f64) {
        let entry = self.0.entry(method.name().to_string()).or_default();
        match mode {
            AggregationMode::Average => entry.avg = Some(rank),
            AggregationMode::Sum => entry.sum = Some(rank),
        }
    }
}

pub fn save_ranks(path: impl AsRef<Path>, report: &RankReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Fidelity scores per method; serializes as `{method: score}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport(pub BTreeMap<String, f64>);

pub fn save_fidelity(path: impl AsRef<Path>, report: &FidelityReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}
