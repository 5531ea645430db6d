//! JSON encoding of measures.
//!
//! Discrete: `{ "dimension": d, "atoms": [[...], ...], "weights": [...] }`.
//! Gaussian: `{ "gaussian": { "mean": [...], "covariance": [[...], ...] } }`.

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use super::{DiscreteMeasure, GaussianSpec};
use crate::error::{Error, Result};

/// Weights whose total is within this of one are renormalised on load.
pub const LOAD_NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureDocument {
    Discrete(DiscreteMeasure),
    Gaussian(GaussianSpec),
}

impl MeasureDocument {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::field("<document>", format!("malformed JSON: {e}")))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::field("<document>", "expected a JSON object"))?;
        if let Some(g) = obj.get("gaussian") {
            parse_gaussian(g).map(MeasureDocument::Gaussian)
        } else {
            parse_discrete(obj).map(MeasureDocument::Discrete)
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            MeasureDocument::Discrete(m) => m.to_json(),
            MeasureDocument::Gaussian(g) => g.to_json(),
        }
    }

    pub fn into_discrete(self) -> Result<DiscreteMeasure> {
        match self {
            MeasureDocument::Discrete(m) => Ok(m),
            MeasureDocument::Gaussian(_) => Err(Error::field(
                "gaussian",
                "a discrete measure was expected",
            )),
        }
    }

    pub fn into_gaussian(self) -> Result<GaussianSpec> {
        match self {
            MeasureDocument::Gaussian(g) => Ok(g),
            MeasureDocument::Discrete(_) => Err(Error::field(
                "gaussian",
                "a Gaussian measure was expected",
            )),
        }
    }
}

impl DiscreteMeasure {
    pub fn to_json(&self) -> Value {
        json!({
            "dimension": self.dim(),
            "atoms": self.atoms().map(<[f64]>::to_vec).collect::<Vec<_>>(),
            "weights": self.weights(),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        MeasureDocument::from_json_str(text)?.into_discrete()
    }
}

impl GaussianSpec {
    pub fn to_json(&self) -> Value {
        let rows: Vec<Vec<f64>> = self
            .covariance()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        json!({ "gaussian": { "mean": self.mean(), "covariance": rows } })
    }
}

fn number(v: &Value, field: &str) -> Result<f64> {
    let x = v
        .as_f64()
        .ok_or_else(|| Error::field(field, "expected a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::field(field, "number is not finite"))
    }
}

fn number_array(v: &Value, field: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::field(field, "expected an array of numbers"))?
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{field}[{i}]")))
        .collect()
}

fn parse_discrete(obj: &Map<String, Value>) -> Result<DiscreteMeasure> {
    let dim = obj
        .get("dimension")
        .ok_or_else(|| Error::field("dimension", "missing"))?
        .as_u64()
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::field("dimension", "expected a positive integer"))? as usize;
    let atoms = obj
        .get("atoms")
        .ok_or_else(|| Error::field("atoms", "missing"))?
        .as_array()
        .ok_or_else(|| Error::field("atoms", "expected an array of points"))?;
    let weights = number_array(
        obj.get("weights")
            .ok_or_else(|| Error::field("weights", "missing"))?,
        "weights",
    )?;
    if atoms.is_empty() {
        return Err(Error::field("atoms", "no atoms"));
    }
    if atoms.len() != weights.len() {
        return Err(Error::field(
            "weights",
            format!("{} weights for {} atoms", weights.len(), atoms.len()),
        ));
    }
    let mut flat = Vec::with_capacity(dim * atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let field = format!("atoms[{i}]");
        let point = number_array(a, &field)?;
        if point.len() != dim {
            return Err(Error::field(
                &field,
                format!("has {} coordinates, dimension is {dim}", point.len()),
            ));
        }
        flat.extend(point);
    }
    if let Some(i) = weights.iter().position(|w| *w <= 0.0) {
        return Err(Error::field(
            &format!("weights[{i}]"),
            "weights must be strictly positive",
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > LOAD_NORMALIZATION_TOLERANCE {
        return Err(Error::field("weights", format!("sum to {total}, not 1")));
    }
    let weights = weights.into_iter().map(|w| w / total).collect();
    DiscreteMeasure::from_flat(dim, flat, weights)
}

fn parse_gaussian(v: &Value) -> Result<GaussianSpec> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::field("gaussian", "expected an object"))?;
    let mean = number_array(
        obj.get("mean")
            .ok_or_else(|| Error::field("gaussian.mean", "missing"))?,
        "gaussian.mean",
    )?;
    let rows = obj
        .get("covariance")
        .ok_or_else(|| Error::field("gaussian.covariance", "missing"))?
        .as_array()
        .ok_or_else(|| Error::field("gaussian.covariance", "expected an array of rows"))?;
    let d = mean.len();
    if d == 0 {
        return Err(Error::field("gaussian.mean", "empty"));
    }
    if rows.len() != d {
        return Err(Error::field(
            "gaussian.covariance",
            format!("{} rows for dimension {d}", rows.len()),
        ));
    }
    let mut cov = DMatrix::zeros(d, d);
    for (r, row) in rows.iter().enumerate() {
        let field = format!("gaussian.covariance[{r}]");
        let vals = number_array(row, &field)?;
        if vals.len() != d {
            return Err(Error::field(&field, format!("has {} entries, expected {d}", vals.len())));
        }
        for (c, x) in vals.into_iter().enumerate() {
            cov[(r, c)] = x;
        }
    }
    GaussianSpec::new(mean, cov).map_err(|e| Error::field("gaussian.covariance", e.to_string()))
}
