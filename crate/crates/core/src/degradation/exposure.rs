//! Running counts of hours above high-concentration thresholds.

use serde::{Deserialize, Serialize};

pub const DEFAULT_EXCEEDANCE_THRESHOLDS: [f64; 3] = [50.0, 100.0, 500.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSeries {
    pub sensor_id: String,
    pub op_hours: Vec<i64>,
    pub thresholds: Vec<f64>,
    /// `counts[k][i]`: hours up to and including `op_hours[i]` with
    /// concentration strictly above `thresholds[k]`.
    pub counts: Vec<Vec<u32>>,
}

impl ExposureSeries {
    /// Count at `op_hour` for threshold index `k`, i.e. the last entry at or
    /// before that hour (0 before the first record).
    pub fn count_at(&self, k: usize, op_hour: i64) -> u32 {
        match self.op_hours.binary_search(&op_hour) {
            Ok(i) => self.counts[k][i],
            Err(0) => 0,
            Err(i) => self.counts[k][i - 1],
        }
    }
}

/// `rows` are `(op_hour, pm25_cf1_mean)` ordered by op_hour.
pub fn cumulative_exceedances(sensor_id: &str, rows: &[(i64, f64)], thresholds: &[f64]) -> ExposureSeries {
    let counts = thresholds
        .iter()
        .map(|t| {
            let mut running = 0u32;
            rows.iter()
                .map(|(_, v)| {
                    running += (*v > *t) as u32;
                    running
                })
                .collect()
        })
        .collect();
    ExposureSeries {
        sensor_id: sensor_id.to_string(),
        op_hours: rows.iter().map(|r| r.0).collect(),
        thresholds: thresholds.to_vec(),
        counts,
    }
}
