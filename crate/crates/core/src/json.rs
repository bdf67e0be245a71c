//! Canonical JSON output: sorted keys, shortest round-trip floats.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};

/// Complex matrix as nested rows of `[re, im]` pairs.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn to_canonical_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable value")
}

pub fn to_canonical_string<T: Serialize>(v: &T) -> String {
    let value = to_canonical_value(v);
    let mut s = serde_json::to_string_pretty(&value).expect("serializable value");
    s.push('\n');
    s
}

pub fn matrix_to_rows(m: &CMatrix) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<CMatrix> {
    let n = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    if n == 0 || k == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(CMatrix::from_fn(n, k, |i, j| c(rows[i][j][0], rows[i][j][1])))
}
