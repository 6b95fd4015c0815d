//! Datasets, ingestion and reproducible train/test splitting.
//!
//! All randomness in this module comes from `ChaCha8Rng` (rand_chacha 0.9)
//! seeded through `SeedableRng::seed_from_u64`. That algorithm is value
//! stable, so a split or synthetic dataset is identical on every machine.

mod registry;
mod tsv;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use registry::{Registry, RegistryEntry, DATA_DIR_ENV};
pub use tsv::{load_tsv, parse_tsv, write_tsv, DEFAULT_TARGET_COLUMN};

/// Feature matrix plus numeric target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `n_total x d`, no missing entries.
    pub features: DMatrix<f64>,
    pub target: Vec<f64>,
    pub column_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: DMatrix<f64>,
        target: Vec<f64>,
        column_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        if target.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} targets"),
                found: format!("{}", target.len()),
            });
        }
        if column_names.len() != d {
            return Err(Error::DimensionMismatch {
                expected: format!("{d} column names"),
                found: format!("{}", column_names.len()),
            });
        }
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 rows, found {n}")));
        }
        if d < 1 {
            return Err(Error::invalid("dataset needs at least one feature column"));
        }
        if features.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self {
            name: name.into(),
            features,
            target,
            column_names,
            target_name: target_name.into(),
        })
    }

    pub fn n_total(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `indices` of the feature matrix, in the given order.
    pub fn select_features(&self, indices: &[usize]) -> DMatrix<f64> {
        self.features.select_rows(indices)
    }

    pub fn select_target(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.target[i]).collect()
    }
}

/// Disjoint train/test index sets covering `0..n_total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Draws `n_train` rows uniformly without replacement as the training set;
/// the complement is the test set. Both index lists are returned sorted.
pub fn subsample_split(dataset: &Dataset, n_train: usize, seed: u64) -> Result<Split> {
    split_indices(dataset.n_total(), n_train, seed)
}

pub(crate) fn split_indices(n_total: usize, n_train: usize, seed: u64) -> Result<Split> {
    if n_train == 0 || n_train >= n_total {
        return Err(Error::invalid(format!(
            "n_train must satisfy 1 <= n_train < n_total (n_train = {n_train}, n_total = {n_total})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_indices = index::sample(&mut rng, n_total, n_train).into_vec();
    train_indices.sort_unstable();

    let mut in_train = vec![false; n_total];
    for &i in &train_indices {
        in_train[i] = true;
    }
    let test_indices = (0..n_total).filter(|&i| !in_train[i]).collect();
    Ok(Split {
        train_indices,
        test_indices,
        seed,
    })
}

/// Number of features of the Friedman #1 benchmark.
pub const FRIEDMAN_FEATURES: usize = 10;

/// Noise-free Friedman #1 response. Only the first five features matter.
pub fn friedman_response(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// Friedman #1 regression data: ten i.i.d. U(0,1) features and
/// `y = friedman_response(x) + eps` with `eps ~ N(0, noise_sd^2)`.
///
/// Noise is always drawn, so the feature rows for a seed do not depend on
/// `noise_sd`.
pub fn generate_friedman(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("generate_friedman needs n >= 1"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!("noise_sd must be finite and >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = DMatrix::zeros(n, FRIEDMAN_FEATURES);
    let mut target = Vec::with_capacity(n);
    let mut row = [0.0; FRIEDMAN_FEATURES];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rng.random::<f64>();
            features[(i, j)] = *v;
        }
        let eps: f64 = rng.sample(StandardNormal);
        target.push(friedman_response(&row) + noise_sd * eps);
    }
    let column_names = (1..=FRIEDMAN_FEATURES).map(|j| format!("x{j}")).collect();
    // n = 1 is allowed for the generator even though Dataset::new wants two rows.
    Ok(Dataset {
        name: "friedman".to_string(),
        features,
        target,
        column_names,
        target_name: DEFAULT_TARGET_COLUMN.to_string(),
    })
}
