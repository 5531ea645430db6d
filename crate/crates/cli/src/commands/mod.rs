pub mod filter;
pub mod gaussian;
pub mod simulate;
pub mod solve;
pub mod threepoint;

use std::fs;
use std::path::Path;

use mbridge::{Error, MeasureDocument, Result};
use nalgebra::DMatrix;
use serde_json::{Map, Value};

use crate::output::io_field;

pub fn read_measure(field: &str, path: &Path) -> Result<MeasureDocument> {
    let text = fs::read_to_string(path).map_err(|e| io_field(field, path, e))?;
    MeasureDocument::from_json_str(&text).map_err(|e| match e {
        Error::Field { field: inner, message } => Error::Field {
            field: format!("{field}: {inner}"),
            message,
        },
        other => other,
    })
}

pub fn parse_list(field: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Field {
                    field: field.to_string(),
                    message: format!("`{s}` is not a finite number"),
                })
        })
        .collect()
}

/// "2" is a 1×1 matrix, "2,3" a diagonal, "a,b;c,d" a full matrix by rows.
pub fn parse_matrix(field: &str, text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text.split(';').map(|r| parse_list(field, r)).collect::<Result<_>>()?;
    if rows.len() == 1 {
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(rows[0].clone())));
    }
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Field {
            field: field.to_string(),
            message: format!("expected {d} rows of {d} entries"),
        });
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        _ => unreachable!("reports are built from json! objects"),
    }
}

pub fn config_of<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialise")
}
