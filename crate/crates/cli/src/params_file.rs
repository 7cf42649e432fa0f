//! On-disk parameter format: a JSON document with explicit shape fields so a
//! mangled file fails loudly instead of transposing a matrix.

use std::fs;
use std::path::Path;

use quadricflow_core::{Activation, Params};
use serde::{Deserialize, Serialize};

use crate::errors::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    Relu,
    LeakyRelu { gamma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub d: usize,
    pub e: usize,
    pub l: usize,
    pub activation: ActivationSpec,
    /// Row-major l x d.
    pub w1: Vec<Vec<f64>>,
    /// Row-major e x l.
    pub w2: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<f64>>,
}

fn to_matrix(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<ndarray::Array2<f64>> {
    if rows.len() != nrows {
        return Err(CliError::Input(format!(
            "{name}: expected {nrows} rows, found {}",
            rows.len()
        )));
    }
    let mut flat = Vec::with_capacity(nrows * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(CliError::Input(format!(
                "{name} row {i}: expected {ncols} entries, found {}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    ndarray::Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| CliError::Input(format!("{name}: {e}")))
}

impl ParamsFile {
    pub fn to_params(&self) -> Result<Params> {
        let activation = match self.activation {
            ActivationSpec::Relu => Activation::Relu,
            ActivationSpec::LeakyRelu { gamma } => {
                Activation::leaky(gamma).map_err(CliError::input)?
            }
        };
        let w1 = to_matrix(&self.w1, self.l, self.d, "w1")?;
        let w2 = to_matrix(&self.w2, self.e, self.l, "w2")?;
        let b1 = match &self.b1 {
            Some(v) if v.len() != self.l => {
                return Err(CliError::Input(format!(
                    "b1: expected {} entries, found {}",
                    self.l,
                    v.len()
                )))
            }
            Some(v) => Some(ndarray::Array1::from_vec(v.clone())),
            None => None,
        };
        let b2 = match &self.b2 {
            Some(v) if v.len() != self.e => {
                return Err(CliError::Input(format!(
                    "b2: expected {} entries, found {}",
                    self.e,
                    v.len()
                )))
            }
            Some(v) => Some(ndarray::Array1::from_vec(v.clone())),
            None => None,
        };
        Params::new(w1, w2, b1, b2, activation).map_err(CliError::input)
    }

    pub fn from_params(p: &Params) -> ParamsFile {
        let activation = match p.activation() {
            Activation::Relu => ActivationSpec::Relu,
            Activation::LeakyRelu { gamma } => ActivationSpec::LeakyRelu { gamma },
        };
        ParamsFile {
            d: p.d(),
            e: p.e(),
            l: p.l(),
            activation,
            w1: p.w1().rows().into_iter().map(|r| r.to_vec()).collect(),
            w2: p.w2().rows().into_iter().map(|r| r.to_vec()).collect(),
            b1: p.b1().map(|b| b.to_vec()),
            b2: p.b2().map(|b| b.to_vec()),
        }
    }
}

pub fn load(path: &Path) -> Result<Params> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    file.to_params()
}

pub fn save(path: &Path, params: &Params) -> Result<()> {
    let file = ParamsFile::from_params(params);
    let mut text = serde_json::to_string_pretty(&file).map_err(CliError::input)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
