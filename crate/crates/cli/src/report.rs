//! Render a markdown summary from the artifacts of a run directory.

use anyhow::{Context, Result};
use gnnprune::metrics::{load_curves, FidelityReport, RankReport};
use std::path::Path;

pub fn render(out_dir: &Path) -> Result<String> {
    let curves = load_curves(out_dir.join("curves.csv")).context("reading curves.csv")?;
    let ranks: RankReport = read_json(out_dir, "ranks.json")?;
    let fidelity: Option<FidelityReport> = match std::fs::read_to_string(out_dir.join("fidelity.json"))
    {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(_) => None,
    };
    let train: serde_json::Value = read_json(out_dir, "train_report.json")?;

    let mut md = String::new();
    md.push_str("# Pruning evaluation report\n\n");
    if let Some(acc) = train.get("test_accuracy").and_then(|v| v.as_f64()) {
        md.push_str(&format!("Unpruned model test accuracy: **{acc:.4}**\n\n"));
    }

    md.push_str("## Mean rank over the pruning grid (1 = best accuracy)\n\n");
    md.push_str("| method | avg | sum |\n|---|---|---|\n");
    for (method, modes) in &ranks.0 {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{r:.2}"));
        md.push_str(&format!("| {method} | {} | {} |\n", fmt(modes.avg), fmt(modes.sum)));
    }

    md.push_str("\n## Test accuracy at p = 50% (sum aggregation)\n\n");
    md.push_str("| method | p=0 | p=50 |\n|---|---|---|\n");
    for c in curves.iter().filter(|c| c.mode.name() == "sum") {
        if let Some(acc) = c.accuracy_at(50) {
            md.push_str(&format!("| {} | {:.4} | {acc:.4} |\n", c.method, c.reference));
        }
    }

    if let Some(fidelity) = fidelity {
        md.push_str("\n## Fidelity of the 50%-pruned graph (lower = better mask)\n\n");
        md.push_str("| method | fidelity |\n|---|---|\n");
        for (method, score) in &fidelity.0 {
            md.push_str(&format!("| {method} | {score:.3e} |\n"));
        }
    }

    md.push_str("\nFull curves: `curves.csv`; random envelope: `random_band.csv`.\n");
    Ok(md)
}

fn read_json<T: serde::de::DeserializeOwned>(out_dir: &Path, name: &str) -> Result<T> {
    let path = out_dir.join(name);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
