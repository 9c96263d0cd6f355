//! CSV input and JSON/CSV output.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use robust_scatter_core::DataSet;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Column means and `n - 1` standard deviations removed by [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: DataSet,
    pub standardization: Option<Standardization>,
}

/// Reads a headered numeric CSV file. With `standardize`, every column is
/// centered by its mean and divided by its sample standard deviation.
pub fn load_csv(path: &Path, standardize: bool) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, path, standardize)
}

/// [`load_csv`] over any reader; `path` only labels error messages.
pub fn read_csv<R: Read>(reader: R, path: &Path, standardize: bool) -> Result<Loaded> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: j + 1,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    row: i + 1,
                    column: j + 1,
                    value: cell.to_owned(),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 || p == 0 {
        return Err(CliError::EmptyData {
            path: path.to_path_buf(),
        });
    }
    let mut x = DMatrix::from_row_slice(n, p, &values);
    let standardization = if standardize {
        Some(standardize_columns(&mut x, &names)?)
    } else {
        None
    };
    let data = DataSet::new(x)?.with_column_names(names)?;
    Ok(Loaded {
        data,
        standardization,
    })
}

/// Centers and scales the columns of `x` in place.
pub fn standardize_columns(x: &mut DMatrix<f64>, names: &[String]) -> Result<Standardization> {
    let n = x.nrows();
    if n < 2 {
        return Err(CliError::Usage("standardization needs at least two rows".into()));
    }
    let mut center = Vec::with_capacity(x.ncols());
    let mut scale = Vec::with_capacity(x.ncols());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(CliError::ConstantColumn {
                column: j + 1,
                name: names.get(j).cloned().unwrap_or_default(),
            });
        }
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        center.push(mean);
        scale.push(sd);
    }
    Ok(Standardization { center, scale })
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One CSV row per serialized record, with a header taken from the field names.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a numeric matrix under the given header.
pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in m.row_iter() {
        w.serialize(row.iter().copied().collect::<Vec<f64>>()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
