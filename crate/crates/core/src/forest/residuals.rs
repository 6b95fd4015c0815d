use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{tree_prediction_matrix, FittedForest};
use crate::{Error, Result};

/// `n x p` in-sample forecast errors, `values[(i, j)] = y_i - M_j(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub values: DMatrix<f64>,
    /// `true` where row `i` is out-of-bag for tree `j`. Absent when the
    /// matrix did not come from a fitted forest.
    pub oob_mask: Option<DMatrix<bool>>,
}

impl ResidualMatrix {
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("residual matrix is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("residual matrix contains non-finite values"));
        }
        Ok(Self { values, oob_mask: None })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Share of out-of-bag rows for each tree.
    pub fn oob_fractions(&self) -> Option<Vec<f64>> {
        let mask = self.oob_mask.as_ref()?;
        let n = mask.nrows() as f64;
        Some(
            mask.column_iter()
                .map(|c| c.iter().filter(|&&b| b).count() as f64 / n)
                .collect(),
        )
    }

    /// Parses comma-separated residuals, one row per observation. A first
    /// line that does not parse as numbers is taken as a header.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut data = Vec::new();
        let mut width = None;
        let mut rows = 0;
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row: line,
                column: 0,
                message: e.to_string(),
            })?;
            if k == 0 && rec.iter().any(|c| c.parse::<f64>().is_err()) {
                width = Some(rec.len());
                continue;
            }
            let w = *width.get_or_insert(rec.len());
            if rec.len() != w {
                return Err(Error::Parse {
                    row: line,
                    column: rec.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", rec.len()),
                });
            }
            for (c, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
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
                data.push(v);
            }
            rows += 1;
        }
        let cols = width.unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("residual matrix is empty"));
        }
        Self::from_values(DMatrix::from_row_slice(rows, cols, &data))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Full in-sample residual matrix of every tree on the training rows, plus
/// the out-of-bag mask from each tree's bootstrap counts.
pub fn residual_matrix(forest: &FittedForest, x: &DMatrix<f64>, y: &[f64]) -> Result<ResidualMatrix> {
    if x.nrows() != forest.n_train || y.len() != forest.n_train {
        return Err(Error::DimensionMismatch {
            expected: format!("{} training rows", forest.n_train),
            found: format!("{} rows, {} targets", x.nrows(), y.len()),
        });
    }
    let mut values = tree_prediction_matrix(forest, x)?;
    for (j, mut col) in values.column_iter_mut().enumerate() {
        debug_assert!(j < forest.num_trees());
        for (i, v) in col.iter_mut().enumerate() {
            *v = y[i] - *v;
        }
    }
    let oob_mask = DMatrix::from_fn(forest.n_train, forest.num_trees(), |i, j| {
        !forest.trees[j].is_in_bag(i)
    });
    Ok(ResidualMatrix {
        values,
        oob_mask: Some(oob_mask),
    })
}
