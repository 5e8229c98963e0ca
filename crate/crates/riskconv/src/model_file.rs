//! JSON model documents: `{"A": [[..]], "B": [[..]], "C": [[..]], "D": [[..]]}`
//! with row-major arrays and `D` optional (identity when absent).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use riskconv_core::cone::SymMatrix;
use riskconv_core::state_space::StateSpaceModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Row-major nested arrays to a matrix; `field` names the offending key in errors.
pub fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::Model(format!("field {field}: matrix is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::Model(format!(
            "field {field}: row {i} has {} entries, row 0 has {cols}",
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Model(format!("field {field}: entries must be finite")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

impl ModelDocument {
    pub fn from_model(model: &StateSpaceModel) -> Self {
        let identity = DMatrix::identity(model.n(), model.n());
        Self {
            a: rows_of(model.a()),
            b: rows_of(model.b()),
            c: rows_of(model.c()),
            d: (model.d() != &identity).then(|| rows_of(model.d())),
        }
    }

    pub fn to_model(&self) -> Result<StateSpaceModel> {
        let a = matrix_from_rows("A", &self.a)?;
        let b = matrix_from_rows("B", &self.b)?;
        let c = matrix_from_rows("C", &self.c)?;
        let d = self.d.as_deref().map(|d| matrix_from_rows("D", d)).transpose()?;
        let n = a.nrows();
        let checks = [
            ("A", a.ncols() == n, format!("must be square, found {}x{}", n, a.ncols())),
            ("B", b.nrows() == n, format!("must have {n} rows to match A, found {}", b.nrows())),
            ("C", c.ncols() == n, format!("must have {n} columns to match A, found {}", c.ncols())),
        ];
        for (field, ok, msg) in checks {
            if !ok {
                return Err(CliError::Model(format!("field {field}: {msg}")));
            }
        }
        if let Some(d) = &d {
            if d.ncols() != n || d.nrows() > n {
                return Err(CliError::Model(format!(
                    "field D: must be q x {n} with q <= {n}, found {}x{}",
                    d.nrows(),
                    d.ncols()
                )));
            }
        }
        StateSpaceModel::new(a, b, c, d).map_err(|e| CliError::Model(e.to_string()))
    }
}

pub fn parse_model(text: &str) -> Result<StateSpaceModel> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| CliError::Model(e.to_string()))?;
    doc.to_model()
}

pub fn read_model(path: &Path) -> Result<StateSpaceModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text)
}

pub fn write_model(path: &Path, model: &StateSpaceModel) -> Result<()> {
    let text = serde_json::to_string_pretty(&ModelDocument::from_model(model))
        .map_err(|e| CliError::Input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// A symmetric matrix stored as a JSON array of rows.
pub fn read_sym_matrix(path: &Path) -> Result<SymMatrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let m = matrix_from_rows("P0", &rows).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(SymMatrix::new(m)?)
}
