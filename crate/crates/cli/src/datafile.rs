//! Dataset ingestion: plain CSV (header row, comma separator, '.' decimals)
//! plus a seeded synthetic generator for self-contained classification runs.

use std::path::Path;

use ndarray::Array2;
use quadricflow_core::gradflow::Dataset;
use quadricflow_core::rng;

use crate::errors::{CliError, Result};

fn read_numeric_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let width = reader.headers().map_err(CliError::input)?.len();
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(CliError::input)?;
        if record.len() != width {
            return Err(CliError::Input(format!(
                "{}: row {i} has {} fields, header has {width}",
                path.display(),
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!("{}: row {i}: bad number {field:?}", path.display()))
            })?;
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Array2::from_shape_vec((rows, width), flat).map_err(CliError::input)
}

/// CSV with exactly d feature columns followed by e target columns.
pub fn load_xy_csv(path: &Path, d: usize, e: usize) -> Result<Dataset> {
    let all = read_numeric_csv(path)?;
    if all.ncols() != d + e {
        return Err(CliError::Input(format!(
            "{}: expected {d} feature + {e} target columns, found {}",
            path.display(),
            all.ncols()
        )));
    }
    let x = all.slice(ndarray::s![.., ..d]).to_owned();
    let y = all.slice(ndarray::s![.., d..]).to_owned();
    Dataset::new(x, y).map_err(CliError::input)
}

/// Classification CSV: any number of feature columns, binary last column.
pub fn load_tabular_csv(path: &Path) -> Result<Dataset> {
    let all = read_numeric_csv(path)?;
    if all.ncols() < 2 {
        return Err(CliError::Input(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let d = all.ncols() - 1;
    if let Some(bad) = all.column(d).iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(CliError::Input(format!(
            "{}: label column must be 0 or 1, found {bad}",
            path.display()
        )));
    }
    let x = all.slice(ndarray::s![.., ..d]).to_owned();
    let y = all.slice(ndarray::s![.., d..]).to_owned();
    Dataset::new(x, y).map_err(CliError::input)
}

/// Two overlapping unit-variance Gaussians with means +-delta/sqrt(d) * 1,
/// alternating labels; overlap makes the classes linearly non-separable
/// while still very learnable.
pub fn synthetic_classification(n: usize, d: usize, delta: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || d == 0 {
        return Err(CliError::Input(format!(
            "synthetic dataset needs n >= 2 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(CliError::Input(format!("bad class separation {delta}")));
    }
    let mut gen = rng::stream_rng(seed, 4);
    let shift = delta / (d as f64).sqrt();
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        let label = (i % 2) as f64;
        let mean = if i % 2 == 0 { -shift } else { shift };
        for j in 0..d {
            x[(i, j)] = mean + rng::standard_normal(&mut gen);
        }
        y[(i, 0)] = label;
    }
    Dataset::new(x, y).map_err(CliError::input)
}
