use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gnnprune::aggregate::AggregationMode;
use gnnprune::attribution::Method;
use gnnprune::graph::save_graph;
use gnnprune_cli::config::RunConfig;
use gnnprune_cli::dot::export_dot;
use gnnprune_cli::pipeline::{
    self, run_until, StopAfter,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gnnprune",
    about = "Train a graph attention model, explain it edge-wise, aggregate the local masks into a global edge mask, prune and evaluate",
    version
)]
struct Cli {
    /// JSON config file mirroring the RunConfig fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; per-stage seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the explain stage.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or ingest the dataset into the run directory.
    Generate,
    /// Dataset + model training.
    Train,
    /// Everything through per-node local masks.
    Explain,
    /// Everything through global soft masks (and random trials).
    Aggregate,
    /// Everything through pruning curves, the random band and ranks.
    Evaluate,
    /// Everything through the fidelity report.
    Fidelity,
    /// Full pipeline including the markdown report.
    Report,
    /// Full pipeline (alias of report).
    Run,
    /// Write the pruned graph of a method/mode at a percentage.
    Prune {
        #[arg(long)]
        method: String,
        #[arg(long, default_value = "sum")]
        mode: String,
        #[arg(long)]
        percent: f64,
        /// Output path; defaults to pruned_<method>_<mode>_p<percent>.json
        /// in the run directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit a DOT drawing of a node's neighborhood under pruning.
    ExportDot {
        #[arg(long)]
        method: String,
        #[arg(long, default_value = "sum")]
        mode: String,
        #[arg(long)]
        percent: f64,
        #[arg(long)]
        center: usize,
        #[arg(long, default_value_t = 2)]
        radius: usize,
        /// Output path; defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = cli.workers {
        cfg.workers = Some(workers);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;

    match &cli.cmd {
        Cmd::Generate => run_and_summarize(&cfg, StopAfter::Dataset)?,
        Cmd::Train => run_and_summarize(&cfg, StopAfter::Train)?,
        Cmd::Explain => run_and_summarize(&cfg, StopAfter::Explain)?,
        Cmd::Aggregate => run_and_summarize(&cfg, StopAfter::Aggregate)?,
        Cmd::Evaluate => run_and_summarize(&cfg, StopAfter::Evaluate)?,
        Cmd::Fidelity => run_and_summarize(&cfg, StopAfter::Fidelity)?,
        Cmd::Report | Cmd::Run => run_and_summarize(&cfg, StopAfter::Report)?,
        Cmd::Prune { method, mode, percent, output } => {
            let method: Method = method.parse()?;
            let mode: AggregationMode = mode.parse()?;
            let (graph, _) = pipeline::load_run_artifacts(&cfg.out_dir)?;
            let gm = pipeline::load_run_global(&cfg.out_dir, &graph, method, mode)?;
            let hm = gnnprune::aggregate::hard_mask(&gm, *percent)?;
            let pruned = graph.prune(&hm.keep)?;
            let path = output.clone().unwrap_or_else(|| {
                cfg.out_dir.join(format!("pruned_{method}_{mode}_p{percent}.json"))
            });
            save_graph(&path, &pruned).context("writing pruned graph")?;
            println!(
                "kept {} of {} edges -> {}",
                pruned.num_edges(),
                graph.num_edges(),
                path.display()
            );
        }
        Cmd::ExportDot { method, mode, percent, center, radius, output } => {
            let method: Method = method.parse()?;
            let mode: AggregationMode = mode.parse()?;
            let (graph, _) = pipeline::load_run_artifacts(&cfg.out_dir)?;
            let gm = pipeline::load_run_global(&cfg.out_dir, &graph, method, mode)?;
            let dot = export_dot(&graph, &gm, *percent, *center, *radius)?;
            match output {
                Some(path) => std::fs::write(path, dot)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{dot}"),
            }
        }
    }
    Ok(())
}

fn run_and_summarize(cfg: &RunConfig, stop: StopAfter) -> Result<()> {
    let manifest = run_until(cfg, stop)?;
    for stage in &manifest.stages {
        let mark = if stage.skipped { "skipped" } else { "ran" };
        println!("{:<18} {:>8} {:>8} ms", stage.name, mark, stage.millis);
    }
    println!("{} artifacts in {}", manifest.artifacts.len(), cfg.out_dir.display());
    Ok(())
}
