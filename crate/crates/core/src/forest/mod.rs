//! Regression random forest.
//!
//! Trees are CART regression trees grown on bootstrap samples with `mtry`
//! candidate features per split. Tree `j` draws all of its randomness from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `j`, so a fitted forest is
//! bit-identical whatever the thread count.

mod residuals;
mod serialize;
mod tree;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use residuals::{residual_matrix, ResidualMatrix};
pub use serialize::FOREST_FORMAT_VERSION;
pub use tree::{predict_tree, Node, RegressionTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Candidate features per split; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    /// A node with fewer than `2 * min_node_size` samples is not split, and
    /// no child may end up smaller than `min_node_size`.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            num_trees: 500,
            mtry: None,
            min_node_size: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::invalid("num_trees must be at least 1"));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid("min_node_size must be at least 1"));
        }
        let mtry = self.resolved_mtry(d);
        if mtry == 0 || mtry > d {
            return Err(Error::invalid(format!("mtry must be in 1..={d}, got {mtry}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedForest {
    pub trees: Vec<RegressionTree>,
    pub config: ForestConfig,
    pub n_features: usize,
    pub n_train: usize,
}

/// Fits `config.num_trees` trees on `(x, y)` in parallel.
pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], config: &ForestConfig) -> Result<FittedForest> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} targets"),
            found: y.len().to_string(),
        });
    }
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 training rows, found {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    config.validate(d)?;
    let mtry = config.resolved_mtry(d);

    let trees = (0..config.num_trees)
        .into_par_iter()
        .map(|j| tree::grow(x, y, config, mtry, j))
        .collect();
    Ok(FittedForest {
        trees,
        config: config.clone(),
        n_features: d,
        n_train: n,
    })
}

impl FittedForest {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Equal-weighted forest prediction for one row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Short hex digest of the tree structure and leaf values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.trees {
            for node in &t.nodes {
                match *node {
                    Node::Split { feature, threshold, left, right } => {
                        h.update([0u8]);
                        h.update((feature as u64).to_le_bytes());
                        h.update(threshold.to_bits().to_le_bytes());
                        h.update((left as u64).to_le_bytes());
                        h.update((right as u64).to_le_bytes());
                    }
                    Node::Leaf { value } => {
                        h.update([1u8]);
                        h.update(value.to_bits().to_le_bytes());
                    }
                }
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Entry `(i, j)` is the prediction of tree `j` for row `i` of `x`.
pub fn tree_prediction_matrix(forest: &FittedForest, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != forest.n_features {
        return Err(Error::DimensionMismatch {
            expected: format!("{} feature columns", forest.n_features),
            found: x.ncols().to_string(),
        });
    }
    let m = x.nrows();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| x.row(i).iter().copied().collect()).collect();
    let columns: Vec<Vec<f64>> = forest
        .trees
        .par_iter()
        .map(|t| rows.iter().map(|r| t.predict(r)).collect())
        .collect();
    let mut out = DMatrix::zeros(m, forest.num_trees());
    for (j, col) in columns.iter().enumerate() {
        out.column_mut(j).copy_from_slice(col);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_friedman;

    fn small_config(num_trees: usize, seed: u64) -> ForestConfig {
        ForestConfig {
            num_trees,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = ForestConfig::default();
        assert_eq!(c.num_trees, 500);
        assert_eq!(c.min_node_size, 5);
        assert!(c.bootstrap);
        assert_eq!(c.resolved_mtry(10), 3);
        assert_eq!(c.resolved_mtry(21), 4);
        assert_eq!(c.resolved_mtry(1), 1);
    }

    #[test]
    fn config_validation() {
        let mut c = ForestConfig::default();
        c.mtry = Some(11);
        assert!(c.validate(10).is_err());
        c.mtry = Some(0);
        assert!(c.validate(10).is_err());
        c = ForestConfig { num_trees: 0, ..Default::default() };
        assert!(c.validate(10).is_err());
        c = ForestConfig { min_node_size: 0, ..Default::default() };
        assert!(c.validate(10).is_err());
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let ds = generate_friedman(60, 1.0, 1).unwrap();
        let y = vec![2.5; 60];
        let f = fit_forest(&ds.features, &y, &small_config(20, 1)).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes, vec![Node::Leaf { value: 2.5 }]);
        }
        let preds = tree_prediction_matrix(&f, &ds.features).unwrap();
        assert!(preds.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn prediction_matrix_columns_and_row_means() {
        let ds = generate_friedman(120, 1.0, 4).unwrap();
        let f = fit_forest(&ds.features, &ds.target, &small_config(7, 2)).unwrap();
        let preds = tree_prediction_matrix(&f, &ds.features).unwrap();
        assert_eq!(preds.shape(), (120, 7));
        for i in 0..120 {
            let row: Vec<f64> = ds.features.row(i).iter().copied().collect();
            for j in 0..7 {
                assert_eq!(preds[(i, j)], predict_tree(&f.trees[j], &row));
            }
            let mean = preds.row(i).iter().sum::<f64>() / 7.0;
            assert!((mean - f.predict(&row)).abs() <= 1e-12);
        }
    }

    #[test]
    fn prediction_matrix_dimension_check() {
        let ds = generate_friedman(30, 1.0, 4).unwrap();
        let f = fit_forest(&ds.features, &ds.target, &small_config(2, 2)).unwrap();
        assert!(tree_prediction_matrix(&f, &DMatrix::zeros(3, 9)).is_err());
    }

    #[test]
    fn fit_rejects_bad_input() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(fit_forest(&x, &[1.0], &ForestConfig::default()).is_err());
        assert!(fit_forest(&x, &[1.0, f64::NAN], &ForestConfig::default()).is_err());
        let one = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(fit_forest(&one, &[1.0], &ForestConfig::default()).is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let ds = generate_friedman(200, 1.0, 8).unwrap();
        let cfg = small_config(16, 42);
        let fit_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_forest(&ds.features, &ds.target, &cfg).unwrap())
        };
        let a = fit_with(1);
        let b = fit_with(4);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = fit_forest(&ds.features, &ds.target, &small_config(16, 43)).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
