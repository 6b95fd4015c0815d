use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hedgeforest() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hedgeforest"));
    c.env("RUST_LOG", "warn").env_remove("HEDGEFOREST_DATA_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    hedgeforest().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_tsv(path: &Path, rows: usize, features: usize) {
    let mut s: Vec<String> = (0..features).map(|j| format!("x{j}")).collect();
    s.push("target".into());
    let mut text = s.join("\t") + "\n";
    for i in 0..rows {
        let mut row: Vec<String> = (0..features).map(|j| ((i * (j + 3)) % 17).to_string()).collect();
        row.push(format!("{}", i as f64 * 0.5));
        text += &(row.join("\t") + "\n");
    }
    fs::write(path, text).unwrap();
}

fn write_registry(path: &Path, file: &str, n_total: usize, d: usize) {
    let json = format!(
        r#"{{"format_version": 1, "datasets": [{{"name": "toy", "n_total": {n_total}, "d": {d}, "file": "{file}"}}]}}"#
    );
    fs::write(path, json).unwrap();
}

fn smoke_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("bench.toml");
    let text = format!(
        "master_seed = 7\nn_train = [200]\nrepetitions = 2\n{extra}\n\n[forest]\nnum_trees = 30\n\n[[datasets]]\nkind = \"friedman\"\nn_total = 600\n"
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["fetch", "weights", "bench", "summarize"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    let o = run(&["weights", "--no-such-flag", "x.csv"]);
    assert_eq!(code(&o), 2);
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fetch_validates_local_file() {
    let dir = tempfile::tempdir().unwrap();
    write_tsv(&dir.path().join("toy.tsv"), 25, 3);
    let reg = dir.path().join("registry.json");
    write_registry(&reg, "toy.tsv", 25, 3);
    let o = run(&[
        "fetch",
        "--offline",
        "--registry",
        reg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("toy\t25 x 3\tpresent"), "{report}");
    let sums = fs::read_to_string(dir.path().join("SHA256SUMS")).unwrap();
    assert!(sums.trim_end().ends_with("  toy.tsv"));
}

#[test]
fn fetch_reports_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    write_tsv(&dir.path().join("toy.tsv"), 25, 3);
    let reg = dir.path().join("registry.json");
    write_registry(&reg, "toy.tsv", 15000, 48);
    let o = run(&[
        "fetch",
        "--offline",
        "--registry",
        reg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("expected 15000 x 48, found 25 x 3"), "{err}");
}

#[test]
fn fetch_offline_missing_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fetch", "--offline", "--dataset", "201_pol", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("201_pol"));
}

#[test]
fn fetch_unknown_dataset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fetch", "--offline", "--dataset", "nope", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn weights_zero_matrix_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    fs::write(&path, "a,b\n0,0\n0,0\n0,0\n").unwrap();
    let o = run(&["weights", path.to_str().unwrap(), "--estimator", "sample"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "index,weight\n0,0.5\n1,0.5\n");
    assert!(stderr(&o).contains("degenerate=true"));
}

#[test]
fn weights_kappa_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let rows: String = (0..30)
        .map(|i| format!("{},{},{}\n", (i % 5) as f64 - 2.0, (i % 7) as f64 * 0.5 - 1.0, ((i * 3) % 11) as f64 - 5.0))
        .collect();
    fs::write(&path, rows).unwrap();

    let out = dir.path().join("out");
    let o = run(&["weights", path.to_str().unwrap(), "--kappa", "inf", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("kappa=inf"));
    let json = fs::read_to_string(out.join("weights.json")).unwrap();
    assert!(json.contains("\"kappa\":\"inf\""), "{json}");
    let csv = fs::read_to_string(out.join("weights.csv")).unwrap();
    let sum: f64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-8);

    let o = run(&["weights", path.to_str().unwrap(), "--kappa", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kappa must be >= 1"));
}

#[test]
fn weights_rejects_single_row_and_bad_csv() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    fs::write(&one, "1,2\n").unwrap();
    assert_eq!(code(&run(&["weights", one.to_str().unwrap()])), 1);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    let o = run(&["weights", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("row 2, column 2"), "{}", stderr(&o));
}

#[test]
fn bench_smoke_writes_outputs_and_summarize_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), "");
    let out = dir.path().join("results");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["raw_mse.csv", "ratios.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let raw = fs::read_to_string(out.join("raw_mse.csv")).unwrap();
    // rf, wrf, hrf_can, one hrf; two repetitions
    assert_eq!(raw.lines().count(), 1 + 2 * 4);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"master_seed\": 7") || manifest.contains("\"master_seed\":7"));

    let o = run(&["summarize", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(printed, fs::read_to_string(out.join("summary.csv")).unwrap());
}

#[test]
fn bench_grid_overrides_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), "");
    let out = dir.path().join("grid");
    let mut args = vec!["bench", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    for k in ["1", "1.5", "2", "2.5", "inf"] {
        args.extend(["--kappa", k]);
    }
    args.extend(["--estimator", "sample", "--estimator", "nonlinear_shrinkage"]);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let raw = fs::read_to_string(out.join("raw_mse.csv")).unwrap();
    let hrf_rows = raw.lines().filter(|l| l.contains(",hrf,")).count();
    assert_eq!(hrf_rows, 2 * 10);
}

#[test]
fn bench_reruns_are_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&["--threads", "1", "bench", "--config", cfg.to_str().unwrap(), "--out-dir", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["bench", "--threads", "4", "--config", cfg.to_str().unwrap(), "--out-dir", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["raw_mse.csv", "ratios.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    let o = run(&["bench", "--seed", "8", "--config", cfg.to_str().unwrap(), "--out-dir", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("raw_mse.csv")).unwrap(), fs::read(c.join("raw_mse.csv")).unwrap());
}

#[test]
fn bench_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "repetitions = 2\nbogus_key = 1\n").unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let cfg = smoke_config(dir.path(), "");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--kappa", "0.9"]);
    assert_eq!(code(&o), 2);

    let text = fs::read_to_string(&cfg).unwrap().replace("n_train = [200]", "n_train = [600]");
    fs::write(&cfg, text).unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_failed_cell_exits_1_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    // too few training rows for nonlinear shrinkage on the residual matrix
    let cfg = dir.path().join("small.toml");
    fs::write(
        &cfg,
        "n_train = [8, 40]\nrepetitions = 1\n[forest]\nnum_trees = 20\n[[datasets]]\nkind = \"friedman\"\nn_total = 80\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("n_train = 8 failed"), "{err}");
    assert!(err.contains("1 of 2 cells failed"), "{err}");
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("nonlinear shrinkage needs at least 12 rows"), "{manifest}");
}

#[test]
fn data_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    write_tsv(&dir.path().join("toy.tsv"), 25, 2);
    let reg = dir.path().join("registry.json");
    write_registry(&reg, "toy.tsv", 25, 2);
    let o = hedgeforest()
        .env("HEDGEFOREST_DATA_DIR", dir.path())
        .args(["fetch", "--offline", "--registry", reg.to_str().unwrap()])
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn summarize_rejects_missing_or_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["summarize", dir.path().to_str().unwrap()])), 1);
    let bad = dir.path().join("r.csv");
    fs::write(&bad, "wrong,header\n").unwrap();
    assert_eq!(code(&run(&["summarize", bad.to_str().unwrap()])), 1);
}
