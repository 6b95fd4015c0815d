//! `hedgeforest` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime failures (including failed
//! benchmark cells), 2 on usage or configuration errors.

mod fetch;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hedgeforest::bench::{
    read_ratios_csv, run_experiment, summarize, write_ratios_csv, write_raw_mse_csv, write_summary_csv,
    ExperimentConfig, RunManifest, RATIOS_FILE, RAW_MSE_FILE, SUMMARY_FILE,
};
use hedgeforest::data::{Registry, DATA_DIR_ENV};
use hedgeforest::forest::ResidualMatrix;
use hedgeforest::hedge::{HedgeProblem, Kappa};
use hedgeforest::moments::{estimate_moments, Estimator};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "hedgeforest", version, about = "Hedged forecast combinations for random forests")]
struct Cli {
    /// Worker threads; results do not depend on it. Defaults to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Download registry datasets, validate their shapes and record checksums.
    Fetch(FetchArgs),
    /// Hedged weights for a residual matrix CSV.
    Weights(WeightsArgs),
    /// Run a benchmark grid from a config file.
    Bench(BenchArgs),
    /// Boxplot statistics from a ratios CSV.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
struct FetchArgs {
    /// Registry JSON; defaults to the bundled PMLB registry.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Destination directory; defaults to $HEDGEFOREST_DATA_DIR, then ./data.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Only these datasets (repeatable).
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Never download; fail on missing files.
    #[arg(long)]
    offline: bool,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    /// Residual matrix: one row per observation, one column per method.
    residuals: PathBuf,
    /// Bound on the L1 norm of the weights, at least 1, or `inf`.
    #[arg(long, default_value = "2", value_parser = parse_kappa)]
    kappa: Kappa,
    #[arg(long, default_value = "nonlinear_shrinkage", value_parser = parse_estimator)]
    estimator: Estimator,
    /// Write weights.csv and weights.json here instead of printing.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the kappa grid (repeatable).
    #[arg(long, value_parser = parse_kappa)]
    kappa: Vec<Kappa>,
    /// Replaces the estimator grid (repeatable).
    #[arg(long, value_parser = parse_estimator)]
    estimator: Vec<Estimator>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// A ratios CSV, or a directory containing one.
    input: PathBuf,
    /// Write summary.csv here instead of printing.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_kappa(s: &str) -> Result<Kappa, String> {
    s.parse().map_err(|e: hedgeforest::Error| e.to_string())
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: hedgeforest::Error| e.to_string())
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<hedgeforest::Error>() {
            Some(hedgeforest::Error::Config(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure { code, error }
    }
}

fn config_error(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_CONFIG, error }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: cannot set up thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match cli.command {
        Command::Fetch(a) => cmd_fetch(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Summarize(a) => cmd_summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_fetch(args: FetchArgs) -> Result<(), Failure> {
    let registry = match &args.registry {
        Some(p) => Registry::load(p).map_err(|e| config_error(e.into()))?,
        None => Registry::pmlb(),
    };
    for name in &args.datasets {
        if registry.get(name).is_none() {
            return Err(config_error(anyhow::anyhow!("dataset `{name}` is not in the registry")));
        }
    }
    let dest = data_dir(args.out_dir);
    std::fs::create_dir_all(&dest).with_context(|| format!("cannot create {}", dest.display()))?;
    let entries: Vec<_> = registry
        .datasets
        .iter()
        .filter(|e| args.datasets.is_empty() || args.datasets.contains(&e.name))
        .collect();
    let report = fetch::fetch_all(&entries, &dest, args.offline)?;
    let mut out = io::stdout().lock();
    for line in &report {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> Result<(), Failure> {
    let file = File::open(&args.residuals).with_context(|| format!("cannot open {}", args.residuals.display()))?;
    let r = ResidualMatrix::parse_csv(BufReader::new(file))
        .with_context(|| format!("cannot read {}", args.residuals.display()))?;
    if r.n() < 2 {
        return Err(anyhow::anyhow!("residual matrix needs at least 2 rows, found {}", r.n()).into());
    }
    let moments = estimate_moments(&r, args.estimator)?;
    let w = HedgeProblem::from_moments(&moments, args.kappa)?.solve()?;
    let summary = format!(
        "kappa={} estimator={} objective={} l1_norm={} degenerate={}",
        args.kappa,
        args.estimator,
        w.objective,
        w.l1_norm(),
        w.degenerate
    );
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
            let mut f = create_file(&dir.join("weights.csv"))?;
            w.write_csv(&mut f)?;
            f.flush()?;
            std::fs::write(dir.join("weights.json"), w.to_json())?;
            println!("{summary}");
        }
        None => {
            let mut out = io::stdout().lock();
            w.write_csv(&mut out)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| config_error(e.into()))?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if !args.kappa.is_empty() {
        config.kappa = args.kappa;
    }
    if !args.estimator.is_empty() {
        config.estimators = args.estimator;
    }
    config.validate().map_err(|e| config_error(e.into()))?;

    let start = Instant::now();
    let result = run_experiment(&config)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut f = create_file(&dir.join(RAW_MSE_FILE))?;
    write_raw_mse_csv(&result.cells, &mut f)?;
    f.flush()?;
    let ratios = result.ratios()?;
    let mut f = create_file(&dir.join(RATIOS_FILE))?;
    write_ratios_csv(&ratios, &mut f)?;
    f.flush()?;
    if !ratios.is_empty() {
        let mut f = create_file(&dir.join(SUMMARY_FILE))?;
        write_summary_csv(&summarize(&ratios)?, &mut f)?;
        f.flush()?;
    }
    let manifest = RunManifest::new(&config, result.statuses, start.elapsed().as_secs_f64());
    manifest.write(dir)?;

    let failed: Vec<_> = manifest.cells.iter().filter(|c| c.error.is_some()).collect();
    if failed.is_empty() {
        log::info!("wrote results for {} cells to {}", manifest.cells.len(), dir.display());
        return Ok(());
    }
    for c in &failed {
        eprintln!("cell {} / n_train = {} failed: {}", c.dataset, c.n_train, c.error.as_deref().unwrap_or(""));
    }
    Err(Failure {
        code: EXIT_RUNTIME,
        error: anyhow::anyhow!("{} of {} cells failed", failed.len(), manifest.cells.len()),
    })
}

fn cmd_summarize(args: SummarizeArgs) -> Result<(), Failure> {
    let path = if args.input.is_dir() { args.input.join(RATIOS_FILE) } else { args.input };
    let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let rows = read_ratios_csv(BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))?;
    let summary = summarize(&rows)?;
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
            let mut f = create_file(&dir.join(SUMMARY_FILE))?;
            write_summary_csv(&summary, &mut f)?;
            f.flush()?;
        }
        None => write_summary_csv(&summary, io::stdout().lock())?,
    }
    Ok(())
}
