//! Run configuration: dataset source, model hyperparameters, method list,
//! aggregation modes, pruning grid and seeds. The JSON config file mirrors
//! these field names.

use anyhow::{bail, Context, Result};
use gnnprune::aggregate::AggregationMode;
use gnnprune::attribution::{GnnExplainerConfig, Method, PgExplainerConfig};
use gnnprune::gnn::TrainConfig;
use gnnprune::graph::BaShapesConfig;
use gnnprune::metrics::default_grid;
use gnnprune::seeds::mix_seed;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Generate(BaShapesConfig),
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_modes")]
    pub modes: Vec<AggregationMode>,
    #[serde(default = "default_grid")]
    pub p_grid: Vec<u32>,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default)]
    pub gnnex: GnnExplainerConfig,
    #[serde(default)]
    pub pgex: PgExplainerConfig,
    #[serde(default = "default_trials")]
    pub random_trials: usize,
    /// Restrict explanation to these nodes; default explains all nodes.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_modes() -> Vec<AggregationMode> {
    vec![AggregationMode::Sum, AggregationMode::Average]
}

fn default_ig_steps() -> usize {
    64
}

fn default_trials() -> usize {
    10
}

fn default_seed() -> u64 {
    8
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Generate(BaShapesConfig::default()),
            model: TrainConfig::default(),
            methods: default_methods(),
            modes: default_modes(),
            p_grid: default_grid(),
            ig_steps: default_ig_steps(),
            gnnex: GnnExplainerConfig::default(),
            pgex: PgExplainerConfig::default(),
            random_trials: default_trials(),
            targets: None,
            seed: default_seed(),
            out_dir: default_out_dir(),
            workers: None,
        }
    }
}

// stage salts for sub-seed derivation
const SALT_DATASET: u64 = 1;
const SALT_TRAIN: u64 = 2;
const SALT_SURROGATE: u64 = 3;
const SALT_PREDICTOR: u64 = 4;
const SALT_EXPLAIN: u64 = 5;
const SALT_RANDOM: u64 = 6;

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Check the configuration before any stage runs.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("methods list is empty");
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(m) {
                bail!("method '{m}' listed twice");
            }
        }
        if self.modes.is_empty() {
            bail!("modes list is empty");
        }
        if self.p_grid.is_empty() {
            bail!("p_grid is empty");
        }
        let mut last = 0;
        for &p in &self.p_grid {
            if p == 0 || p > 100 {
                bail!("pruning percentage {p} outside 1..=100");
            }
            if p <= last {
                bail!("p_grid must be strictly increasing");
            }
            last = p;
        }
        if self.ig_steps == 0 {
            bail!("ig_steps must be at least 1");
        }
        if self.methods.contains(&Method::Random) && self.random_trials == 0 {
            bail!("random_trials must be at least 1 when the random method is enabled");
        }
        if let DatasetSpec::File { path } = &self.dataset {
            if !path.exists() {
                bail!("dataset file {} does not exist", path.display());
            }
        }
        Ok(())
    }

    /// Derive per-stage seeds from the top-level seed so that one value
    /// governs the whole run. Sub-seed fields in the config file are
    /// overwritten.
    pub fn resolve(mut self) -> Self {
        if let DatasetSpec::Generate(cfg) = &mut self.dataset {
            cfg.seed = mix_seed(self.seed, SALT_DATASET);
        }
        self.model.seed = mix_seed(self.seed, SALT_TRAIN);
        self
    }

    pub fn surrogate_seed(&self) -> u64 {
        mix_seed(self.seed, SALT_SURROGATE)
    }

    pub fn predictor_seed(&self) -> u64 {
        mix_seed(self.seed, SALT_PREDICTOR)
    }

    pub fn explain_seed(&self, method: Method) -> u64 {
        let idx = Method::ALL.iter().position(|&m| m == method).unwrap_or(0) as u64;
        mix_seed(mix_seed(self.seed, SALT_EXPLAIN), idx)
    }

    pub fn random_trial_seed(&self, trial: usize) -> u64 {
        mix_seed(mix_seed(self.seed, SALT_RANDOM), trial as u64)
    }

    pub fn explainable_methods(&self) -> Vec<Method> {
        self.methods.iter().copied().filter(|&m| m != Method::Random).collect()
    }
}
