//! Benchmark harness.
//!
//! A cell is one `(dataset, n_train)` pair. Each of its repetitions draws a
//! train/test split, fits one forest, and evaluates every combination method
//! on the same test rows with the same trees:
//!
//! * `rf`: equal weights,
//! * `wrf`: OOB-error weights,
//! * `hrf_can`: hedged weights with the sample covariance and `kappa = 1`,
//! * `hrf`: hedged weights for each configured `(kappa, estimator)`.
//!
//! Methods are compared by the ratio of root mean test MSE over repetitions.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::{subsample_split, Dataset};
use crate::forest::{fit_forest, residual_matrix, tree_prediction_matrix, ForestConfig};
use crate::hedge::{combine, winham_weights, HedgeProblem, Kappa, WeightVector};
use crate::moments::{estimate_moments, Estimator, MomentEstimates};
use crate::{Error, Result};

pub use config::{DatasetSpec, ExperimentConfig, DEFAULT_N_TRAIN};
pub use output::{
    read_ratios_csv, write_ratios_csv, write_raw_mse_csv, write_summary_csv, CellStatus, OutputFiles, RunManifest,
    MANIFEST_FILE, MANIFEST_SCHEMA_VERSION, RATIOS_FILE, RAW_MSE_FILE, SUMMARY_FILE,
};

/// Deterministic 64-bit seed for one use (`tag`) in one repetition.
pub fn derive_seed(tag: &str, master_seed: u64, dataset: &str, n_train: usize, rep: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"hedgeforest/");
    h.update(tag.as_bytes());
    h.update([0]);
    h.update(master_seed.to_le_bytes());
    h.update((dataset.len() as u64).to_le_bytes());
    h.update(dataset.as_bytes());
    h.update((n_train as u64).to_le_bytes());
    h.update((rep as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn index_fingerprint(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rf,
    Wrf,
    HrfCanonical,
    Hrf { kappa: Kappa, estimator: Estimator },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::Wrf => "wrf",
            Method::HrfCanonical => "hrf_can",
            Method::Hrf { .. } => "hrf",
        }
    }

    /// `(kappa, estimator)` for hedged methods.
    pub fn hedge_params(&self) -> Option<(Kappa, Estimator)> {
        match *self {
            Method::HrfCanonical => Some((Kappa::Finite(1.0), Estimator::Sample)),
            Method::Hrf { kappa, estimator } => Some((kappa, estimator)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hedge_params() {
            Some((k, e)) => write!(f, "{}(kappa={k}, {e})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Methods evaluated for a config, in output order.
pub fn methods_for(config: &ExperimentConfig) -> Vec<Method> {
    let mut m = vec![Method::Rf, Method::Wrf];
    if config.canonical {
        m.push(Method::HrfCanonical);
    }
    for &estimator in &config.estimators {
        for &kappa in &config.kappa {
            m.push(Method::Hrf { kappa, estimator });
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub rep: usize,
    pub split_seed: u64,
    pub forest_seed: u64,
    pub forest_fingerprint: String,
    pub split_fingerprint: String,
    /// Test MSE per method, aligned with [`CellResult::methods`].
    pub mse: Vec<f64>,
    /// Whether the method fell back to equal weights on a zero covariance.
    pub fallback: Vec<bool>,
}

/// All repetitions of one `(dataset, n_train)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dataset: String,
    pub n_train: usize,
    pub methods: Vec<Method>,
    pub repetitions: Vec<Repetition>,
}

impl CellResult {
    pub fn method_index(&self, method: &Method) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    /// Test MSE of one method across repetitions.
    pub fn mse(&self, method: &Method) -> Option<Vec<f64>> {
        let j = self.method_index(method)?;
        Some(self.repetitions.iter().map(|r| r.mse[j]).collect())
    }

    pub fn rmse(&self, method: &Method) -> Option<f64> {
        let m = self.mse(method)?;
        Some((m.iter().sum::<f64>() / m.len() as f64).sqrt())
    }

    pub fn fallback_count(&self) -> usize {
        self.repetitions.iter().map(|r| r.fallback.iter().filter(|&&f| f).count()).sum()
    }

    /// RMSE ratios of every hedged variant against each baseline present.
    pub fn ratios(&self) -> Result<Vec<RatioRow>> {
        let mut rows = Vec::new();
        for m in &self.methods {
            let Method::Hrf { kappa, estimator } = *m else { continue };
            let hrf = self.mse(m).expect("method is present");
            for cmp in Comparison::ALL {
                let Some(base) = self.mse(&cmp.baseline()) else { continue };
                let r = rmse_ratio(&hrf, &base)?;
                rows.push(RatioRow {
                    dataset: self.dataset.clone(),
                    n_train: self.n_train,
                    kappa,
                    estimator,
                    comparison: cmp,
                    ratio: r.value,
                    flagged: r.flagged,
                });
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Comparison {
    HrfOverRf,
    HrfOverWrf,
    HrfOverCanonical,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [Comparison::HrfOverRf, Comparison::HrfOverWrf, Comparison::HrfOverCanonical];

    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::HrfOverRf => "hrf/rf",
            Comparison::HrfOverWrf => "hrf/wrf",
            Comparison::HrfOverCanonical => "hrf/hrf_can",
        }
    }

    pub fn baseline(self) -> Method {
        match self {
            Comparison::HrfOverRf => Method::Rf,
            Comparison::HrfOverWrf => Method::Wrf,
            Comparison::HrfOverCanonical => Method::HrfCanonical,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Comparison::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown comparison `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub dataset: String,
    pub n_train: usize,
    pub kappa: Kappa,
    pub estimator: Estimator,
    pub comparison: Comparison,
    pub ratio: f64,
    /// The ratio came from a zero denominator.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseRatio {
    pub value: f64,
    pub flagged: bool,
}

/// `sqrt(mean(mse_a)) / sqrt(mean(mse_b))`. When every denominator MSE is
/// zero the ratio is flagged: `1` if the numerator is zero too, otherwise
/// infinite.
pub fn rmse_ratio(mse_a: &[f64], mse_b: &[f64]) -> Result<RmseRatio> {
    if mse_a.len() != mse_b.len() || mse_a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: "two nonempty MSE vectors of equal length".into(),
            found: format!("lengths {} and {}", mse_a.len(), mse_b.len()),
        });
    }
    if mse_a.iter().chain(mse_b).any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("MSE values must be finite and nonnegative"));
    }
    let n = mse_a.len() as f64;
    let a = (mse_a.iter().sum::<f64>() / n).sqrt();
    let b = (mse_b.iter().sum::<f64>() / n).sqrt();
    Ok(if b > 0.0 {
        RmseRatio { value: a / b, flagged: false }
    } else if a == 0.0 {
        RmseRatio { value: 1.0, flagged: true }
    } else {
        RmseRatio { value: f64::INFINITY, flagged: true }
    })
}

/// `(mean(e^2), mean(e)^2, mean((e - mean(e))^2))`; the first equals the sum
/// of the other two.
pub fn bias_variance_check(e: &[f64]) -> Result<(f64, f64, f64)> {
    if e.len() < 2 {
        return Err(Error::invalid("bias-variance check needs at least 2 values"));
    }
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let mse = e.iter().map(|v| v * v).sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mse, mean * mean, var))
}

/// Linear-interpolation quantile of sorted data (`(n - 1) q` positions).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boxplot statistics of the ratios of one `(n_train, kappa, estimator,
/// comparison)` group across datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n_train: usize,
    pub kappa: Kappa,
    pub estimator: Estimator,
    pub comparison: Comparison,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn summarize(rows: &[RatioRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::invalid("no ratios to summarize"));
    }
    type Key = (usize, u64, Estimator, Comparison);
    let mut groups: BTreeMap<Key, (Kappa, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        // bit patterns of nonnegative floats sort like the floats
        let key = (r.n_train, r.kappa.value().to_bits(), r.estimator, r.comparison);
        groups.entry(key).or_insert_with(|| (r.kappa, Vec::new())).1.push(r.ratio);
    }
    Ok(groups
        .into_iter()
        .map(|((n_train, _, estimator, comparison), (kappa, mut v))| {
            v.sort_by(f64::total_cmp);
            SummaryRow {
                n_train,
                kappa,
                estimator,
                comparison,
                count: v.len(),
                min: v[0],
                q1: quantile_sorted(&v, 0.25),
                median: quantile_sorted(&v, 0.5),
                q3: quantile_sorted(&v, 0.75),
                max: v[v.len() - 1],
                mean: v.iter().sum::<f64>() / v.len() as f64,
            }
        })
        .collect())
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / y.len() as f64
}

fn hedged_weights(moments: &MomentEstimates, kappa: Kappa, context: &str) -> Result<(WeightVector, bool)> {
    let p = moments.mu_hat.len();
    if moments.sigma_hat.iter().all(|&v| v == 0.0) {
        log::warn!("{context}: estimated covariance is zero, using equal weights");
        return Ok((WeightVector::equal(p, kappa), true));
    }
    let w = HedgeProblem::from_moments(moments, kappa)?.solve()?;
    if w.degenerate {
        log::warn!("{context}: objective is identically zero, using equal weights");
    }
    let degenerate = w.degenerate;
    Ok((w, degenerate))
}

fn run_repetition(dataset: &Dataset, n_train: usize, config: &ExperimentConfig, methods: &[Method], rep: usize) -> Result<Repetition> {
    let name = dataset.name.as_str();
    let split_seed = derive_seed("split", config.master_seed, name, n_train, rep);
    let forest_seed = derive_seed("forest", config.master_seed, name, n_train, rep);
    let split = subsample_split(dataset, n_train, split_seed)?;
    let x_train = dataset.select_features(&split.train_indices);
    let y_train = dataset.select_target(&split.train_indices);
    let x_test = dataset.select_features(&split.test_indices);
    let y_test = dataset.select_target(&split.test_indices);

    let forest_config = ForestConfig { seed: forest_seed, ..config.forest.clone() };
    let forest = fit_forest(&x_train, &y_train, &forest_config)?;
    let residuals = residual_matrix(&forest, &x_train, &y_train)?;
    let test_predictions: DMatrix<f64> = tree_prediction_matrix(&forest, &x_test)?;
    let p = forest.num_trees();

    let mut moments: Vec<(Estimator, MomentEstimates)> = Vec::new();
    let mut mse_out = Vec::with_capacity(methods.len());
    let mut fallback = Vec::with_capacity(methods.len());
    for method in methods {
        let context = format!("{name}, n_train = {n_train}, repetition {rep}, {method}");
        let (w, fell_back) = match method {
            Method::Rf => (WeightVector::equal(p, Kappa::Finite(1.0)), false),
            Method::Wrf => (winham_weights(&residuals, config.wrf_rule, config.wrf_lambda)?, false),
            _ => {
                let (kappa, estimator) = method.hedge_params().expect("hedged method");
                let idx = match moments.iter().position(|(e, _)| *e == estimator) {
                    Some(i) => i,
                    None => {
                        moments.push((estimator, estimate_moments(&residuals, estimator)?));
                        moments.len() - 1
                    }
                };
                hedged_weights(&moments[idx].1, kappa, &context)?
            }
        };
        let pred = combine(&w, &test_predictions)?;
        mse_out.push(mse(&pred, &y_test));
        fallback.push(fell_back);
    }
    Ok(Repetition {
        rep,
        split_seed,
        forest_seed,
        forest_fingerprint: forest.fingerprint(),
        split_fingerprint: index_fingerprint(&split.train_indices),
        mse: mse_out,
        fallback,
    })
}

/// Runs all repetitions of one cell. Repetitions run in parallel and are
/// collected in order; the first failure aborts the cell.
pub fn run_cell(dataset: &Dataset, n_train: usize, config: &ExperimentConfig) -> Result<CellResult> {
    if n_train == 0 || n_train >= dataset.n_total() {
        return Err(Error::Config(format!(
            "n_train = {n_train} must be in 1..{} for `{}`",
            dataset.n_total(),
            dataset.name
        )));
    }
    if config.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let methods = methods_for(config);
    let repetitions = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            run_repetition(dataset, n_train, config, &methods, rep).map_err(|e| Error::Repetition {
                dataset: dataset.name.clone(),
                n_train,
                rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        dataset: dataset.name.clone(),
        n_train,
        methods,
        repetitions,
    })
}

/// Outcome of a whole grid: successful cells in order plus one status per
/// cell.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub statuses: Vec<CellStatus>,
}

impl ExperimentResult {
    pub fn all_ok(&self) -> bool {
        self.statuses.iter().all(|s| s.error.is_none())
    }

    pub fn ratios(&self) -> Result<Vec<RatioRow>> {
        let mut out = Vec::new();
        for c in &self.cells {
            out.extend(c.ratios()?);
        }
        Ok(out)
    }
}

/// Runs every `(dataset, n_train)` cell. Configuration and data-loading
/// problems are returned as errors; a failing cell is recorded in its status
/// and the remaining cells still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let registry = config.load_registry()?;
    let datasets = config
        .datasets
        .iter()
        .map(|spec| config.load_dataset(spec, &registry))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(&Dataset, usize)> = datasets
        .iter()
        .flat_map(|d| config.n_train.iter().map(move |&n| (d, n)))
        .collect();
    let outcomes: Vec<(Result<CellResult>, f64)> = jobs
        .par_iter()
        .map(|&(ds, n)| {
            let start = Instant::now();
            log::info!("running {} with n_train = {n}", ds.name);
            let r = run_cell(ds, n, config);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut cells = Vec::new();
    let mut statuses = Vec::new();
    for ((ds, n), (outcome, wall)) in jobs.iter().zip(outcomes) {
        let mut status = CellStatus {
            dataset: ds.name.clone(),
            n_train: *n,
            repetitions: config.repetitions,
            wall_seconds: wall,
            fallbacks: 0,
            error: None,
        };
        match outcome {
            Ok(cell) => {
                status.fallbacks = cell.fallback_count();
                cells.push(cell);
            }
            Err(e) => {
                log::error!("{e}");
                status.error = Some(e.to_string());
            }
        }
        statuses.push(status);
    }
    Ok(ExperimentResult { cells, statuses })
}
