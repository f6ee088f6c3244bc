//! Turn per-node local masks into one global soft edge mask (sum or
//! coverage-average), then into hard keep/remove masks at a pruning
//! percentage.

use crate::error::{Error, Result};
use crate::graph::{EdgeId, LabeledGraph};
use crate::attribution::LocalMask;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggregationMode {
    #[serde(rename = "sum")]
    Sum,
    #[serde(rename = "avg")]
    Average,
}

impl AggregationMode {
    pub fn name(&self) -> &'static str {
        match self {
            AggregationMode::Sum => "sum",
            AggregationMode::Average => "avg",
        }
    }
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(AggregationMode::Sum),
            "avg" => Ok(AggregationMode::Average),
            other => Err(Error::InvalidArgument(format!("unknown aggregation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions {
    /// Divide each local mask by its maximum score before accumulating.
    pub per_mask_max_norm: bool,
    /// Average mode divides by the node count instead of the per-edge
    /// coverage (which would make averaging a pure rescaling of summing).
    pub average_by_node_count: bool,
}

/// Aggregated scores over every edge of the graph. Edges never covered by a
/// local mask carry score 0 and coverage 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMask {
    pub mode: AggregationMode,
    pub scores: Vec<f64>,
    pub coverage: Vec<u32>,
}

impl GlobalMask {
    pub fn num_edges(&self) -> usize {
        self.scores.len()
    }
}

/// Accumulate local masks into a global mask. Iteration is in ascending
/// mask order, so results are bitwise deterministic.
pub fn aggregate(
    masks: &[LocalMask],
    g: &LabeledGraph,
    mode: AggregationMode,
) -> Result<GlobalMask> {
    aggregate_with(masks, g, mode, &AggregateOptions::default())
}

pub fn aggregate_with(
    masks: &[LocalMask],
    g: &LabeledGraph,
    mode: AggregationMode,
    opts: &AggregateOptions,
) -> Result<GlobalMask> {
    let e = g.num_edges();
    let mut sums = vec![0.0; e];
    let mut coverage = vec![0u32; e];
    for mask in masks {
        let norm = if opts.per_mask_max_norm {
            let max = mask.scores().iter().map(|&(_, s)| s).fold(0.0, f64::max);
            if max > 0.0 { max } else { 1.0 }
        } else {
            1.0
        };
        for &(edge, score) in mask.scores() {
            if edge.0 >= e {
                return Err(Error::UnknownEdge(edge.0));
            }
            sums[edge.0] += score / norm;
            coverage[edge.0] += 1;
        }
    }
    let scores = match mode {
        AggregationMode::Sum => sums,
        AggregationMode::Average => {
            if opts.average_by_node_count {
                let n = masks.len().max(1) as f64;
                sums.iter().map(|s| s / n).collect()
            } else {
                sums.iter()
                    .zip(&coverage)
                    .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                    .collect()
            }
        }
    };
    Ok(GlobalMask { mode, scores, coverage })
}

/// Keep/remove decision at pruning percentage `percent`: the
/// `round(percent/100 * |E|)` lowest-scored edges are removed, ties broken
/// by ascending edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct HardMask {
    pub percent: f64,
    pub keep: Vec<EdgeId>,
    pub removed: Vec<EdgeId>,
}

pub fn hard_mask(gm: &GlobalMask, percent: f64) -> Result<HardMask> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::InvalidArgument(format!(
            "pruning percentage must be in [0, 100], got {percent}"
        )));
    }
    let e = gm.num_edges();
    // round half away from zero; percent/100*|E| is frequently fractional
    let remove_count = (percent / 100.0 * e as f64).round() as usize;
    let mut order: Vec<usize> = (0..e).collect();
    order.sort_by(|&a, &b| {
        gm.scores[a].total_cmp(&gm.scores[b]).then_with(|| a.cmp(&b))
    });
    let mut removed: Vec<EdgeId> = order[..remove_count].iter().map(|&i| EdgeId(i)).collect();
    let mut keep: Vec<EdgeId> = order[remove_count..].iter().map(|&i| EdgeId(i)).collect();
    removed.sort_unstable();
    keep.sort_unstable();
    Ok(HardMask { percent, keep, removed })
}

/// Seeded uniform(0,1) score per edge; the random baseline. Coverage is 1
/// everywhere, so sum and average rank identically.
pub fn random_attribution(g: &LabeledGraph, seed: u64) -> GlobalMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..g.num_edges()).map(|_| rng.random::<f64>()).collect();
    GlobalMask { mode: AggregationMode::Sum, scores, coverage: vec![1; g.num_edges()] }
}

/// CSV export: `edge_id,i,j,score,coverage`, one row per edge, sorted by id.
pub fn save_global_mask(path: impl AsRef<Path>, gm: &GlobalMask, g: &LabeledGraph) -> Result<()> {
    if gm.num_edges() != g.num_edges() {
        return Err(Error::Shape(format!(
            "mask covers {} edges, graph has {}",
            gm.num_edges(),
            g.num_edges()
        )));
    }
    let mut out = String::from("edge_id,i,j,score,coverage\n");
    for (id, &(i, j)) in g.edges().iter().enumerate() {
        out.push_str(&format!("{id},{i},{j},{},{}\n", gm.scores[id], gm.coverage[id]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_global_mask(
    path: impl AsRef<Path>,
    g: &LabeledGraph,
    mode: AggregationMode,
) -> Result<GlobalMask> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("edge_id,i,j,score,coverage") => {}
        other => return Err(Error::Csv(format!("bad global mask header: {other:?}"))),
    }
    let mut scores = vec![0.0; g.num_edges()];
    let mut coverage = vec![0u32; g.num_edges()];
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Csv(format!("line {}: expected 5 fields", lineno + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Csv(format!("line {}: bad number '{s}'", lineno + 2)))
        };
        let id = parse(fields[0])? as usize;
        if id >= g.num_edges() {
            return Err(Error::UnknownEdge(id));
        }
        let (i, j) = (parse(fields[1])? as usize, parse(fields[2])? as usize);
        if g.edge(EdgeId(id))? != (i, j) {
            return Err(Error::Csv(format!("line {}: endpoints do not match edge {id}", lineno + 2)));
        }
        scores[id] = parse(fields[3])?;
        coverage[id] = parse(fields[4])? as u32;
        seen += 1;
    }
    if seen != g.num_edges() {
        return Err(Error::Csv(format!("{seen} rows for {} edges", g.num_edges())));
    }
    Ok(GlobalMask { mode, scores, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::TargetSpec;
    use crate::graph::{generate_ba_shapes, BaShapesConfig, LabeledGraph, Split};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn path_graph(n: usize) -> LabeledGraph {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        let (g, _) = LabeledGraph::new(
            n,
            edges,
            Tensor::ones(n, 1),
            vec![0; n],
            vec![Split::Train; n],
            1,
        )
        .unwrap();
        g
    }

    fn mask(node: usize, scores: &[(usize, f64)]) -> LocalMask {
        LocalMask::new(
            TargetSpec { node, class: 0 },
            scores.iter().map(|&(e, s)| (EdgeId(e), s)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn sum_and_average_arithmetic() {
        let g = path_graph(3);
        let masks = vec![mask(0, &[(0, 0.2)]), mask(1, &[(0, 0.4)])];
        let sum = aggregate(&masks, &g, AggregationMode::Sum).unwrap();
        assert!((sum.scores[0] - 0.6).abs() < 1e-15);
        assert_eq!(sum.coverage[0], 2);
        let avg = aggregate(&masks, &g, AggregationMode::Average).unwrap();
        assert!((avg.scores[0] - 0.3).abs() < 1e-15);
        // uncovered edge: zero score, zero coverage
        assert_eq!(sum.scores[1], 0.0);
        assert_eq!(sum.coverage[1], 0);
    }

    #[test]
    fn single_mask_sum_equals_average_on_support() {
        let g = path_graph(4);
        let masks = vec![mask(1, &[(0, 0.7), (1, 0.1)])];
        let sum = aggregate(&masks, &g, AggregationMode::Sum).unwrap();
        let avg = aggregate(&masks, &g, AggregationMode::Average).unwrap();
        assert_eq!(sum.scores, avg.scores);
    }

    #[test]
    fn unknown_edge_rejected() {
        let g = path_graph(3);
        let masks = vec![mask(0, &[(9, 0.2)])];
        assert!(matches!(
            aggregate(&masks, &g, AggregationMode::Sum),
            Err(Error::UnknownEdge(9))
        ));
    }

    #[test]
    fn hard_mask_extremes_and_hand_case() {
        let gm = GlobalMask {
            mode: AggregationMode::Sum,
            scores: (0..10).map(|i| i as f64).collect(),
            coverage: vec![1; 10],
        };
        let all = hard_mask(&gm, 0.0).unwrap();
        assert_eq!(all.keep.len(), 10);
        assert!(all.removed.is_empty());
        let none = hard_mask(&gm, 100.0).unwrap();
        assert!(none.keep.is_empty());
        assert_eq!(none.removed.len(), 10);
        // p = 30: remove the edges scored 0, 1, 2
        let p30 = hard_mask(&gm, 30.0).unwrap();
        assert_eq!(p30.removed, vec![EdgeId(0), EdgeId(1), EdgeId(2)]);
    }

    #[test]
    fn hard_mask_ties_break_by_edge_id() {
        let gm = GlobalMask {
            mode: AggregationMode::Sum,
            scores: vec![1.0, 1.0, 5.0, 5.0],
            coverage: vec![1; 4],
        };
        let one = hard_mask(&gm, 25.0).unwrap();
        assert_eq!(one.removed, vec![EdgeId(0)]);
        let three = hard_mask(&gm, 75.0).unwrap();
        assert_eq!(three.removed, vec![EdgeId(0), EdgeId(1), EdgeId(2)]);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let gm = GlobalMask {
            mode: AggregationMode::Sum,
            scores: vec![0.0, 1.0],
            coverage: vec![1; 2],
        };
        // 25% of 2 edges = 0.5 -> removes 1
        assert_eq!(hard_mask(&gm, 25.0).unwrap().removed.len(), 1);
    }

    #[test]
    fn random_attribution_is_seeded_and_in_range() {
        let g = generate_ba_shapes(&BaShapesConfig::new(30, 6, 0.1, 5)).unwrap();
        let a = random_attribution(&g, 9);
        let b = random_attribution(&g, 9);
        assert_eq!(a, b);
        assert!(a.scores.iter().all(|&s| (0.0..1.0).contains(&s)));
    }

    #[test]
    fn different_seeds_change_many_hard_mask_edges() {
        let g = generate_ba_shapes(&BaShapesConfig::default()).unwrap();
        let a = hard_mask(&random_attribution(&g, 1), 50.0).unwrap();
        let b = hard_mask(&random_attribution(&g, 2), 50.0).unwrap();
        let removed_a: std::collections::HashSet<_> = a.removed.iter().collect();
        let sym_diff = b.removed.iter().filter(|e| !removed_a.contains(e)).count() * 2;
        assert!(sym_diff >= 100, "only {sym_diff} edges differ at p=50");
    }

    #[test]
    fn csv_roundtrip() {
        let g = path_graph(5);
        let masks = vec![mask(0, &[(0, 0.5), (1, 0.25)]), mask(4, &[(3, 2.0)])];
        let gm = aggregate(&masks, &g, AggregationMode::Average).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_global_mask(f.path(), &gm, &g).unwrap();
        let back = load_global_mask(f.path(), &g, AggregationMode::Average).unwrap();
        assert_eq!(back, gm);
    }

    proptest! {
        #[test]
        fn positive_scaling_never_changes_hard_masks(
            scores in proptest::collection::vec(0.0f64..10.0, 8..40),
            scale in 0.01f64..100.0,
            percent in 0u32..=100u32,
        ) {
            let gm = GlobalMask {
                mode: AggregationMode::Sum,
                scores: scores.clone(),
                coverage: vec![1; scores.len()],
            };
            let scaled = GlobalMask {
                mode: AggregationMode::Sum,
                scores: scores.iter().map(|s| s * scale).collect(),
                coverage: vec![1; scores.len()],
            };
            let a = hard_mask(&gm, percent as f64).unwrap();
            let b = hard_mask(&scaled, percent as f64).unwrap();
            prop_assert_eq!(a.keep, b.keep);
        }

        #[test]
        fn removal_count_and_nesting(
            scores in proptest::collection::vec(0.0f64..10.0, 4..60),
            p1 in 0u32..=100u32,
            p2 in 0u32..=100u32,
        ) {
            let gm = GlobalMask {
                mode: AggregationMode::Sum,
                scores: scores.clone(),
                coverage: vec![1; scores.len()],
            };
            let (lo, hi) = (p1.min(p2), p1.max(p2));
            let a = hard_mask(&gm, lo as f64).unwrap();
            let b = hard_mask(&gm, hi as f64).unwrap();
            let expect = |p: u32| (p as f64 / 100.0 * scores.len() as f64).round() as usize;
            prop_assert_eq!(a.removed.len(), expect(lo));
            prop_assert_eq!(b.removed.len(), expect(hi));
            let removed_b: std::collections::HashSet<_> = b.removed.iter().collect();
            prop_assert!(a.removed.iter().all(|e| removed_b.contains(e)));
        }
    }

    #[test]
    fn constant_coverage_makes_modes_agree() {
        // every edge covered by the same number of masks: the two modes are
        // positive rescalings of each other, so hard masks coincide
        let g = path_graph(3);
        let masks = vec![
            mask(0, &[(0, 0.9), (1, 0.1)]),
            mask(1, &[(0, 0.3), (1, 0.8)]),
        ];
        let sum = aggregate(&masks, &g, AggregationMode::Sum).unwrap();
        let avg = aggregate(&masks, &g, AggregationMode::Average).unwrap();
        for p in [0.0, 50.0, 100.0] {
            assert_eq!(hard_mask(&sum, p).unwrap().keep, hard_mask(&avg, p).unwrap().keep);
        }
    }
}
