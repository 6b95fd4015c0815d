//! Result files.
//!
//! `raw_mse.csv`
//! : `dataset,n_train,rep,split_seed,forest_seed,method,kappa,estimator,mse,fallback,forest_fingerprint,split_fingerprint`
//!
//! `ratios.csv`
//! : `dataset,n_train,kappa,estimator,comparison,ratio,flagged`
//!
//! `summary.csv`
//! : `n_train,kappa,estimator,comparison,count,min,q1,median,q3,max,mean`
//!
//! `manifest.json`
//! : [`RunManifest`]
//!
//! Numbers are written in shortest round-trip form, so files are
//! byte-identical across reruns.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellResult, Comparison, ExperimentConfig, RatioRow, SummaryRow};
use crate::hedge::Kappa;
use crate::{Error, Result};

pub const RAW_MSE_FILE: &str = "raw_mse.csv";
pub const RATIOS_FILE: &str = "ratios.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

const RAW_HEADER: [&str; 12] = [
    "dataset", "n_train", "rep", "split_seed", "forest_seed", "method", "kappa", "estimator", "mse", "fallback",
    "forest_fingerprint", "split_fingerprint",
];
const RATIO_HEADER: [&str; 7] = ["dataset", "n_train", "kappa", "estimator", "comparison", "ratio", "flagged"];
const SUMMARY_HEADER: [&str; 11] =
    ["n_train", "kappa", "estimator", "comparison", "count", "min", "q1", "median", "q3", "max", "mean"];

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_raw_mse_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER).map_err(csv_err)?;
    for cell in cells {
        for r in &cell.repetitions {
            for (j, m) in cell.methods.iter().enumerate() {
                let (kappa, estimator) = m
                    .hedge_params()
                    .map(|(k, e)| (k.to_string(), e.to_string()))
                    .unwrap_or_default();
                w.write_record([
                    cell.dataset.clone(),
                    cell.n_train.to_string(),
                    r.rep.to_string(),
                    r.split_seed.to_string(),
                    r.forest_seed.to_string(),
                    m.name().to_string(),
                    kappa,
                    estimator,
                    r.mse[j].to_string(),
                    r.fallback[j].to_string(),
                    r.forest_fingerprint.clone(),
                    r.split_fingerprint.clone(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_ratios_csv<W: Write>(rows: &[RatioRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATIO_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.n_train.to_string(),
            r.kappa.to_string(),
            r.estimator.to_string(),
            r.comparison.as_str().to_string(),
            r.ratio.to_string(),
            r.flagged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_ratios_csv<R: Read>(input: R) -> Result<Vec<RatioRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RATIO_HEADER) {
        return Err(Error::Format(format!("expected ratios header `{}`", RATIO_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |c: usize, what: &str| Error::Parse {
            row: line,
            column: c + 1,
            message: format!("invalid {what} `{}`", field(c)),
        };
        let ratio: f64 = field(5).parse().map_err(|_| bad(5, "ratio"))?;
        if ratio.is_nan() || ratio < 0.0 {
            return Err(bad(5, "ratio"));
        }
        rows.push(RatioRow {
            dataset: field(0).to_string(),
            n_train: field(1).parse().map_err(|_| bad(1, "n_train"))?,
            kappa: field(2).parse::<Kappa>().map_err(|_| bad(2, "kappa"))?,
            estimator: field(3).parse().map_err(|_| bad(3, "estimator"))?,
            comparison: Comparison::parse(field(4)).map_err(|_| bad(4, "comparison"))?,
            ratio,
            flagged: field(6).parse().map_err(|_| bad(6, "flag"))?,
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n_train.to_string(),
            r.kappa.to_string(),
            r.estimator.to_string(),
            r.comparison.as_str().to_string(),
            r.count.to_string(),
            r.min.to_string(),
            r.q1.to_string(),
            r.median.to_string(),
            r.q3.to_string(),
            r.max.to_string(),
            r.mean.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub dataset: String,
    pub n_train: usize,
    pub repetitions: usize,
    pub wall_seconds: f64,
    /// Hedged fits that fell back to equal weights.
    pub fallbacks: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub raw_mse: String,
    pub ratios: String,
    pub summary: String,
}

impl Default for OutputFiles {
    fn default() -> Self {
        Self {
            raw_mse: RAW_MSE_FILE.into(),
            ratios: RATIOS_FILE.into(),
            summary: SUMMARY_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub master_seed: u64,
    pub threads: usize,
    pub config: ExperimentConfig,
    pub cells: Vec<CellStatus>,
    /// File names relative to the output directory.
    pub outputs: OutputFiles,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, cells: Vec<CellStatus>, wall_seconds: f64) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            threads: rayon::current_num_threads(),
            config: config.clone(),
            cells,
            outputs: OutputFiles::default(),
            wall_seconds,
        }
    }

    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid manifest: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported manifest schema version {}", m.schema_version)));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::DatasetSpec;
    use crate::moments::Estimator;

    fn rows() -> Vec<RatioRow> {
        vec![
            RatioRow {
                dataset: "a,b".into(),
                n_train: 200,
                kappa: Kappa::Unbounded,
                estimator: Estimator::Sample,
                comparison: Comparison::HrfOverCanonical,
                ratio: 0.1 + 0.2,
                flagged: false,
            },
            RatioRow {
                dataset: "c".into(),
                n_train: 400,
                kappa: Kappa::Finite(1.5),
                estimator: Estimator::NonlinearShrinkage,
                comparison: Comparison::HrfOverRf,
                ratio: 1.0,
                flagged: true,
            },
        ]
    }

    #[test]
    fn ratios_round_trip() {
        let mut buf = Vec::new();
        write_ratios_csv(&rows(), &mut buf).unwrap();
        assert_eq!(read_ratios_csv(&buf[..]).unwrap(), rows());
    }

    #[test]
    fn ratios_reader_reports_position() {
        let text = "dataset,n_train,kappa,estimator,comparison,ratio,flagged\nx,200,2,sample,hrf/rf,oops,false\n";
        match read_ratios_csv(text.as_bytes()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 6)),
            other => panic!("{other:?}"),
        }
        assert!(read_ratios_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = ExperimentConfig {
            datasets: vec![DatasetSpec::Registry { name: "201_pol".into() }],
            kappa: vec![Kappa::Finite(1.5), Kappa::Unbounded],
            ..Default::default()
        };
        let cells = vec![CellStatus {
            dataset: "201_pol".into(),
            n_train: 200,
            repetitions: 100,
            wall_seconds: 1.0 / 3.0,
            fallbacks: 0,
            error: Some("boom".into()),
        }];
        let m = RunManifest::new(&cfg, cells, 12.25);
        assert!(!m.all_ok());
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }
}
