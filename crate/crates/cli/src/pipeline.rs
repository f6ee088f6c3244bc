//! Stage-by-stage pipeline: generate/ingest -> train -> (surrogate,
//! predictor) -> explain -> aggregate -> evaluate -> fidelity -> report.
//!
//! Every stage reads and writes plain files under the output directory, so
//! any stage can be re-run or inspected independently. A manifest records
//! the config snapshot, content hashes of all artifacts and per-stage
//! timings; re-running with an unchanged config skips stages whose outputs
//! already exist with matching hashes.

use crate::config::{DatasetSpec, RunConfig};
use anyhow::{bail, Context, Result};
use gnnprune::aggregate::{
    aggregate, load_global_mask, random_attribution, save_global_mask, AggregationMode,
    GlobalMask,
};
use gnnprune::attribution::{
    default_targets, explain_all, load_masks, save_masks, Explainer, Method, TargetSpec,
};
use gnnprune::gnn::{
    load_checkpoint, save_checkpoint, train_gat, train_sgc_surrogate, GatModel, SgcSurrogate,
};
use gnnprune::graph::{generate_ba_shapes, load_graph, save_graph, LabeledGraph};
use gnnprune::metrics::{
    band_from_trials, fidelity_minus, pruning_curve, save_band, save_curves, save_fidelity,
    save_ranks, average_ranks, FidelityReport, PruneCurve, RankReport,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SGC_DEPTH: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub skipped: bool,
    pub millis: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub artifacts: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

/// How far to take the pipeline; subcommands map onto these cut points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StopAfter {
    Dataset,
    Train,
    Explain,
    Aggregate,
    Evaluate,
    Fidelity,
    Report,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(hex(&hasher.finalize()))
}

struct PipelineCtx {
    out: PathBuf,
    prior: Option<RunManifest>,
    manifest: RunManifest,
}

impl PipelineCtx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn can_skip(&self, outputs: &[String]) -> bool {
        let Some(prior) = &self.prior else { return false };
        outputs.iter().all(|name| {
            let path = self.out.join(name);
            match (prior.artifacts.get(name), path.exists()) {
                (Some(recorded), true) => {
                    sha256_file(&path).map(|h| &h == recorded).unwrap_or(false)
                }
                _ => false,
            }
        })
    }

    fn stage(
        &mut self,
        name: &str,
        outputs: &[String],
        run: impl FnOnce(&PipelineCtx) -> Result<()>,
    ) -> Result<()> {
        let start = Instant::now();
        let skipped = self.can_skip(outputs);
        if !skipped {
            run(self).with_context(|| format!("stage '{name}' failed"))?;
        }
        for output in outputs {
            let hash = sha256_file(&self.out.join(output))
                .with_context(|| format!("stage '{name}' did not produce {output}"))?;
            self.manifest.artifacts.insert(output.clone(), hash);
        }
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            skipped,
            millis: start.elapsed().as_millis() as u64,
        });
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        let path = self.out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

pub fn masks_file(method: Method) -> String {
    format!("masks_{method}.json")
}

pub fn global_file(method: Method, mode: AggregationMode) -> String {
    format!("global_{method}_{mode}.csv")
}

pub fn random_trial_file(trial: usize) -> String {
    format!("random_trial_{trial}.csv")
}

/// Run the whole pipeline (resumable).
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    run_until(cfg, StopAfter::Report)
}

pub fn run_until(raw: &RunConfig, stop: StopAfter) -> Result<RunManifest> {
    raw.validate()?;
    let cfg = raw.clone().resolve();
    if let Some(workers) = cfg.workers {
        // first build wins if several pipelines share the process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let chash = config_hash(&cfg)?;
    let prior = load_manifest(&cfg.out_dir)
        .ok()
        .filter(|m: &RunManifest| m.config_hash == chash);
    let mut ctx = PipelineCtx {
        out: cfg.out_dir.clone(),
        prior,
        manifest: RunManifest {
            config: cfg.clone(),
            config_hash: chash,
            artifacts: BTreeMap::new(),
            stages: Vec::new(),
        },
    };

    // dataset
    ctx.stage("dataset", &["graph.json".to_string()], |ctx| {
        let graph = match &cfg.dataset {
            DatasetSpec::Generate(gen_cfg) => generate_ba_shapes(gen_cfg)?,
            DatasetSpec::File { path } => {
                let (graph, report) = load_graph(path)?;
                if report.duplicate_edges > 0 {
                    eprintln!(
                        "warning: dropped {} duplicate edges from {}",
                        report.duplicate_edges,
                        path.display()
                    );
                }
                graph
            }
        };
        save_graph(ctx.path("graph.json"), &graph)?;
        Ok(())
    })?;
    let (graph, _) = load_graph(ctx.path("graph.json"))?;
    if stop == StopAfter::Dataset {
        return ctx.finish();
    }

    // train
    ctx.stage(
        "train",
        &["gat.json".to_string(), "train_report.json".to_string()],
        |ctx| {
            let (model, report) = train_gat(&graph, &cfg.model)?;
            save_checkpoint(ctx.path("gat.json"), &model, &cfg.model)?;
            let summary = serde_json::json!({
                "test_accuracy": report.test_accuracy,
                "best_epoch": report.best_epoch,
                "epochs_run": report.epochs_run,
                "val_curve": report.val_curve,
            });
            std::fs::write(ctx.path("train_report.json"), serde_json::to_string_pretty(&summary)?)?;
            Ok(())
        },
    )?;
    let (model, _) = load_checkpoint(ctx.path("gat.json"))?;
    if stop == StopAfter::Train {
        return ctx.finish();
    }

    let methods = cfg.explainable_methods();

    // surrogate for the SGC-gradient method
    if methods.contains(&Method::Fdnx) {
        ctx.stage("surrogate", &["sgc.json".to_string()], |ctx| {
            let teacher = model.logits(&graph)?;
            let mut train_cfg = gnnprune::gnn::TrainConfig::surrogate_default();
            train_cfg.seed = cfg.surrogate_seed();
            let surrogate = train_sgc_surrogate(&graph, &teacher, SGC_DEPTH, &train_cfg)?;
            std::fs::write(ctx.path("sgc.json"), serde_json::to_string(&surrogate)?)?;
            Ok(())
        })?;
    }

    // mask predictor
    if methods.contains(&Method::Pgex) {
        ctx.stage("predictor", &["pgex.json".to_string()], |ctx| {
            let predictor = gnnprune::attribution::train_pgexplainer(
                &model,
                &graph,
                &cfg.pgex,
                cfg.predictor_seed(),
            )?;
            std::fs::write(ctx.path("pgex.json"), serde_json::to_string(&predictor)?)?;
            Ok(())
        })?;
    }

    // explain, one stage per method
    let targets = resolve_targets(&cfg, &model, &graph)?;
    for &method in &methods {
        ctx.stage(&format!("explain:{method}"), &[masks_file(method)], |ctx| {
            let surrogate: SgcSurrogate;
            let predictor: gnnprune::attribution::MaskPredictor;
            let explainer = match method {
                Method::Att => Explainer::attention(&model, &graph)?,
                Method::Sa => Explainer::Saliency { model: &model },
                Method::Ig => Explainer::IntegratedGradients { model: &model, steps: cfg.ig_steps },
                Method::Gb => Explainer::GuidedBackprop { model: &model },
                Method::Gnnex => Explainer::GnnExplainer {
                    model: &model,
                    config: cfg.gnnex.clone(),
                    seed: cfg.explain_seed(method),
                },
                Method::Pgex => {
                    let text = std::fs::read_to_string(ctx.path("pgex.json"))?;
                    predictor = serde_json::from_str(&text)?;
                    Explainer::pg(&predictor, &model, &graph)?
                }
                Method::Fdnx => {
                    let text = std::fs::read_to_string(ctx.path("sgc.json"))?;
                    surrogate = serde_json::from_str(&text)?;
                    Explainer::FastDnx { surrogate: &surrogate }
                }
                Method::Random => unreachable!("random has no local masks"),
            };
            let masks = explain_all(&explainer, &graph, &targets)?;
            save_masks(ctx.path(&masks_file(method)), &masks)?;
            Ok(())
        })?;
    }
    if stop == StopAfter::Explain {
        return ctx.finish();
    }

    // aggregate, one stage per method covering all modes
    for &method in &methods {
        let outputs: Vec<String> = cfg.modes.iter().map(|&m| global_file(method, m)).collect();
        ctx.stage(&format!("aggregate:{method}"), &outputs, |ctx| {
            let masks = load_masks(ctx.path(&masks_file(method)), &graph)?;
            for &mode in &cfg.modes {
                let gm = aggregate(&masks, &graph, mode)?;
                save_global_mask(ctx.path(&global_file(method, mode)), &gm, &graph)?;
            }
            Ok(())
        })?;
    }

    // random trial masks
    let use_random = cfg.methods.contains(&Method::Random);
    if use_random {
        let outputs: Vec<String> = (0..cfg.random_trials).map(random_trial_file).collect();
        ctx.stage("random", &outputs, |ctx| {
            for trial in 0..cfg.random_trials {
                let gm = random_attribution(&graph, cfg.random_trial_seed(trial));
                save_global_mask(ctx.path(&random_trial_file(trial)), &gm, &graph)?;
            }
            Ok(())
        })?;
    }
    if stop == StopAfter::Aggregate {
        return ctx.finish();
    }

    // evaluate: curves, band, ranks
    let mut evaluate_outputs = vec!["curves.csv".to_string(), "ranks.json".to_string()];
    if use_random {
        evaluate_outputs.push("random_band.csv".to_string());
    }
    ctx.stage("evaluate", &evaluate_outputs, |ctx| {
        let mut curves: Vec<PruneCurve> = Vec::new();
        for &mode in &cfg.modes {
            for &method in &methods {
                let gm = load_global_mask(ctx.path(&global_file(method, mode)), &graph, mode)?;
                curves.push(pruning_curve(&model, &graph, &gm, method, mode, &cfg.p_grid)?);
            }
        }
        let band = if use_random {
            let mut trial_curves = Vec::with_capacity(cfg.random_trials);
            for trial in 0..cfg.random_trials {
                let gm = load_global_mask(
                    ctx.path(&random_trial_file(trial)),
                    &graph,
                    AggregationMode::Sum,
                )?;
                trial_curves.push(pruning_curve(
                    &model,
                    &graph,
                    &gm,
                    Method::Random,
                    AggregationMode::Sum,
                    &cfg.p_grid,
                )?);
            }
            Some(band_from_trials(&trial_curves)?)
        } else {
            None
        };

        // rank table per mode; the random mean curve joins every mode column
        let mut ranks = RankReport::default();
        for &mode in &cfg.modes {
            let mut per_mode: Vec<PruneCurve> =
                curves.iter().filter(|c| c.mode == mode).cloned().collect();
            if let Some(band) = &band {
                let mut mean = band.mean_curve.clone();
                mean.mode = mode;
                per_mode.push(mean);
            }
            let refs: Vec<&PruneCurve> = per_mode.iter().collect();
            for (method, rank) in average_ranks(&refs)? {
                ranks.insert(method, mode, rank);
            }
        }

        // curves.csv lists the method curves plus the random mean per mode
        let mut all_curves = curves.clone();
        if let Some(band) = &band {
            for &mode in &cfg.modes {
                let mut mean = band.mean_curve.clone();
                mean.mode = mode;
                all_curves.push(mean);
            }
            save_band(ctx.path("random_band.csv"), band)?;
        }
        save_curves(ctx.path("curves.csv"), &all_curves)?;
        save_ranks(ctx.path("ranks.json"), &ranks)?;
        Ok(())
    })?;
    if stop == StopAfter::Evaluate {
        return ctx.finish();
    }

    // fidelity of the 50%-pruned graph per method (sum-mode masks)
    ctx.stage("fidelity", &["fidelity.json".to_string()], |ctx| {
        let mode = if cfg.modes.contains(&AggregationMode::Sum) {
            AggregationMode::Sum
        } else {
            cfg.modes[0]
        };
        let mut report = FidelityReport::default();
        for &method in &methods {
            let gm = load_global_mask(ctx.path(&global_file(method, mode)), &graph, mode)?;
            report.0.insert(method.name().to_string(), fidelity_minus(&model, &graph, &gm)?);
        }
        save_fidelity(ctx.path("fidelity.json"), &report)?;
        Ok(())
    })?;
    if stop == StopAfter::Fidelity {
        return ctx.finish();
    }

    // human-readable report
    ctx.stage("report", &["report.md".to_string()], |ctx| {
        let text = crate::report::render(&ctx.out)?;
        std::fs::write(ctx.path("report.md"), text)?;
        Ok(())
    })?;

    ctx.finish()
}

fn resolve_targets(
    cfg: &RunConfig,
    model: &GatModel,
    graph: &LabeledGraph,
) -> Result<Vec<TargetSpec>> {
    let all = default_targets(model, graph)?;
    match &cfg.targets {
        None => Ok(all),
        Some(nodes) => nodes
            .iter()
            .map(|&v| {
                if v >= graph.num_nodes() {
                    bail!("target node {v} out of range");
                }
                Ok(all[v])
            })
            .collect(),
    }
}

pub fn load_manifest(out_dir: &Path) -> Result<RunManifest> {
    let path = out_dir.join("manifest.json");
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load an artifact pair (graph + trained model) for the standalone
/// subcommands that operate on an existing run directory.
pub fn load_run_artifacts(out_dir: &Path) -> Result<(LabeledGraph, GatModel)> {
    let (graph, _) = load_graph(out_dir.join("graph.json"))
        .context("loading graph.json (run the pipeline through `train` first)")?;
    let (model, _) = load_checkpoint(out_dir.join("gat.json"))
        .context("loading gat.json (run the pipeline through `train` first)")?;
    Ok((graph, model))
}

/// Load the global mask of a (method, mode) pair from a run directory.
pub fn load_run_global(
    out_dir: &Path,
    graph: &LabeledGraph,
    method: Method,
    mode: AggregationMode,
) -> Result<GlobalMask> {
    let name = if method == Method::Random { random_trial_file(0) } else { global_file(method, mode) };
    load_global_mask(out_dir.join(&name), graph, mode)
        .with_context(|| format!("loading {name} (run the pipeline through `aggregate` first)"))
}
