//! Error ~ hour + cumulative exceedance count + hour × count.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Outcome;
use crate::stats::ols;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub op_hour: f64,
    /// Cumulative count of hours above the exposure threshold so far.
    pub count: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFit {
    pub outcome: Outcome,
    pub threshold: f64,
    /// `(Intercept)`, `hour`, `count`, `hour:count`.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n: usize,
}

impl InteractionFit {
    pub fn interaction(&self) -> (f64, f64) {
        (self.coefficients[3], self.std_errors[3])
    }
}

pub fn interaction_trend(outcome: Outcome, threshold: f64, rows: &[InteractionRow]) -> Result<InteractionFit> {
    if rows.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "interaction model needs at least 5 rows, got {}",
            rows.len()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), 4, |i, j| {
        let r = &rows[i];
        match j {
            0 => 1.0,
            1 => r.op_hour,
            2 => r.count,
            _ => r.op_hour * r.count,
        }
    });
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let names: Vec<String> = ["(Intercept)", "hour", "count", "hour:count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let res = ols(&y, &x, &names)?;
    Ok(InteractionFit {
        outcome,
        threshold,
        names,
        coefficients: res.coefficients,
        std_errors: res.std_errors,
        ci_lower: res.ci_lower,
        ci_upper: res.ci_upper,
        p_values: res.p_values,
        n: rows.len(),
    })
}
