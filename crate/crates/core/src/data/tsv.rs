use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::DMatrix;

use super::Dataset;
use crate::{Error, Result};

/// PMLB names the response column `target`.
pub const DEFAULT_TARGET_COLUMN: &str = "target";

/// Reads a tab-separated file with a header row. Files ending in `.gz` are
/// decompressed on the fly. The dataset name is the file name without the
/// `.tsv`/`.gz` suffixes.
pub fn load_tsv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = file_name
        .trim_end_matches(".gz")
        .trim_end_matches(".tsv")
        .to_string();
    let reader: Box<dyn Read> = if file_name.ends_with(".gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    parse_tsv(reader, target_column, &name)
}

/// Parses TSV content. Row numbers in errors are 1-based file lines (the
/// header is line 1); column numbers are 1-based.
pub fn parse_tsv<R: Read>(reader: R, target_column: &str, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Format(format!("target column `{target_column}` not found in header")))?;
    let width = header.len();
    if width < 2 {
        return Err(Error::Format("need at least one feature column besides the target".into()));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut target = Vec::new();
    let mut n = 0usize;
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() != width {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: line,
                column: c + 1,
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("non-finite value `{cell}`"),
                });
            }
            if c == target_idx {
                target.push(v);
            } else {
                values.push(v);
            }
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::invalid(format!("dataset needs at least 2 rows, found {n}")));
    }

    let d = width - 1;
    let features = DMatrix::from_row_slice(n, d, &values);
    let column_names = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(name, features, target, column_names, target_column)
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(line);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Writes features in column order followed by the target column. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_tsv<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    let mut header = dataset.column_names.clone();
    header.push(dataset.target_name.clone());
    writeln!(out, "{}", header.join("\t"))?;
    for i in 0..dataset.n_total() {
        for j in 0..dataset.n_features() {
            write!(out, "{}\t", dataset.features[(i, j)])?;
        }
        writeln!(out, "{}", dataset.target[i])?;
    }
    Ok(())
}
