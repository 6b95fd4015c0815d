use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_friedman, Dataset, Registry, DATA_DIR_ENV};
use crate::forest::ForestConfig;
use crate::hedge::{Kappa, WinhamRule};
use crate::moments::Estimator;
use crate::{Error, Result};

pub const DEFAULT_N_TRAIN: [usize; 9] = [200, 400, 600, 800, 1000, 2000, 3000, 4000, 5000];

/// Where a benchmark dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Synthetic Friedman #1 data. Without an explicit `seed` the data seed
    /// is derived from the master seed and the name.
    Friedman {
        #[serde(default = "friedman_name")]
        name: String,
        n_total: usize,
        #[serde(default = "one")]
        noise_sd: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// An entry of the dataset registry, read from the data directory.
    Registry { name: String },
}

fn friedman_name() -> String {
    "friedman".into()
}

fn one() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Friedman { name, .. } | DatasetSpec::Registry { name } => name,
        }
    }
}

/// A full benchmark grid. Parsed from TOML:
///
/// ```toml
/// master_seed = 1
/// n_train = [200, 400]
/// repetitions = 100
/// kappa = [2.0, "inf"]
/// estimators = ["nonlinear_shrinkage"]
///
/// [forest]
/// num_trees = 500
///
/// [[datasets]]
/// kind = "friedman"
/// n_total = 2400
///
/// [[datasets]]
/// kind = "registry"
/// name = "201_pol"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    pub n_train: Vec<usize>,
    /// Number of independent train/test repetitions per cell.
    pub repetitions: usize,
    pub kappa: Vec<Kappa>,
    pub estimators: Vec<Estimator>,
    /// The per-tree forest seed is derived per repetition; `forest.seed` is
    /// ignored.
    pub forest: ForestConfig,
    pub master_seed: u64,
    pub wrf_rule: WinhamRule,
    pub wrf_lambda: f64,
    /// Also evaluate the sample-covariance, `kappa = 1` variant.
    pub canonical: bool,
    /// Registry file; the bundled PMLB registry when absent.
    pub registry: Option<PathBuf>,
    /// Directory holding registry files; overridden by `HEDGEFOREST_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            n_train: DEFAULT_N_TRAIN.to_vec(),
            repetitions: 100,
            kappa: vec![Kappa::Finite(2.0)],
            estimators: vec![Estimator::NonlinearShrinkage],
            forest: ForestConfig::default(),
            master_seed: 0,
            wrf_rule: WinhamRule::ExpInverse,
            wrf_lambda: 5.0,
            canonical: true,
            registry: None,
            data_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths in the file are relative to the file
        if let Some(base) = path.parent() {
            for p in [&mut cfg.registry, &mut cfg.data_dir].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return fail("no datasets configured".into());
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return fail("n_train must be a nonempty list of positive counts".into());
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.kappa.is_empty() || self.estimators.is_empty() {
            return fail("kappa and estimators must be nonempty".into());
        }
        if let Some(k) = self.kappa.iter().find(|k| !(k.value() >= 1.0)) {
            return fail(format!("kappa must be >= 1, got {k}"));
        }
        if self.wrf_rule == WinhamRule::Power && !(self.wrf_lambda > 0.0) {
            return fail("wrf_lambda must be positive".into());
        }
        let mut names: Vec<&str> = self.datasets.iter().map(DatasetSpec::name).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("dataset `{}` listed twice", w[0]));
        }
        for spec in &self.datasets {
            if let DatasetSpec::Friedman { n_total, noise_sd, .. } = spec {
                if !(*noise_sd >= 0.0) {
                    return fail("noise_sd must be >= 0".into());
                }
                self.check_sizes(spec.name(), *n_total)?;
            }
        }
        let f = &self.forest;
        if f.num_trees == 0 || f.min_node_size == 0 || f.mtry == Some(0) {
            return fail("forest: num_trees, min_node_size and mtry must be positive".into());
        }
        Ok(())
    }

    fn check_sizes(&self, name: &str, n_total: usize) -> Result<()> {
        if let Some(&n) = self.n_train.iter().find(|&&n| n >= n_total) {
            return Err(Error::Config(format!(
                "n_train = {n} is not below the {n_total} rows of `{name}`"
            )));
        }
        Ok(())
    }

    /// Data directory: environment variable, then config, then `./data`.
    pub fn resolved_data_dir(&self) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn load_registry(&self) -> Result<Registry> {
        match &self.registry {
            Some(path) => Registry::load(path),
            None => Ok(Registry::pmlb()),
        }
    }

    /// Materializes one dataset and checks it is large enough for the grid.
    pub fn load_dataset(&self, spec: &DatasetSpec, registry: &Registry) -> Result<Dataset> {
        let ds = match spec {
            DatasetSpec::Friedman { name, n_total, noise_sd, seed } => {
                let seed = seed.unwrap_or_else(|| super::derive_seed("data", self.master_seed, name, *n_total, 0));
                let mut ds = generate_friedman(*n_total, *noise_sd, seed)?;
                ds.name = name.clone();
                ds
            }
            DatasetSpec::Registry { name } => registry
                .get(name)
                .ok_or_else(|| Error::Config(format!("dataset `{name}` is not in the registry")))?
                .load(&self.resolved_data_dir())?,
        };
        self.check_sizes(&ds.name, ds.n_total())?;
        Ok(ds)
    }
}
