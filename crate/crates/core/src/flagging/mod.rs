//! The dual-channel disagreement flag.
//!
//! An hour is flagged when `|A - B| > abs_threshold` and the percent
//! difference `2|A - B| / (A + B)` exceeds the sensor's own x-quantile of
//! that statistic. Both comparisons are strict.

mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::HourlyRecord;
use crate::stats::{pearson_r, quantile_sorted, sample_std};
use crate::{Error, Result};

pub use sweep::{default_grid, sweep_percentiles, PairSweepRow, SweepConfig, SweepResult, SweepRow};

pub const DEFAULT_ABS_THRESHOLD: f64 = 5.0;
pub const DEFAULT_PERCENTILE: f64 = 0.85;

/// `2|a - b| / (a + b)`, defined as 0 when both channels read 0.
pub fn percent_difference(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        0.0
    } else {
        2.0 * (a - b).abs() / s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRule {
    pub abs_threshold: f64,
    pub percentile_x: f64,
    pub per_sensor_cutoff: BTreeMap<String, f64>,
}

impl FlagRule {
    /// Cutoffs from each sensor's full hourly history.
    pub fn from_hourly(hourly: &[HourlyRecord], percentile_x: f64, abs_threshold: f64) -> Result<(Self, Vec<String>)> {
        let pd = PercentDifferences::from_hourly(hourly);
        let (cutoffs, excluded) = pd.cutoffs(percentile_x)?;
        Ok((
            FlagRule {
                abs_threshold,
                percentile_x,
                per_sensor_cutoff: cutoffs,
            },
            excluded,
        ))
    }

    pub fn is_flagged(&self, sensor_id: &str, a: f64, b: f64) -> Result<bool> {
        if (a - b).abs() <= self.abs_threshold {
            return Ok(false);
        }
        let cutoff = self
            .per_sensor_cutoff
            .get(sensor_id)
            .ok_or_else(|| Error::MissingCutoff(sensor_id.to_string()))?;
        Ok(percent_difference(a, b) > *cutoff)
    }
}

/// Sorted percent-difference series per sensor, reused across quantiles.
#[derive(Debug, Clone, Default)]
pub struct PercentDifferences {
    sorted: BTreeMap<String, Vec<f64>>,
    /// Sensors seen without a single dual-channel record.
    empty: Vec<String>,
}

impl PercentDifferences {
    pub fn from_pairs<'a, I>(values: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Option<(f64, f64)>)>,
    {
        let mut sorted: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut seen: BTreeMap<String, ()> = BTreeMap::new();
        for (id, ch) in values {
            if !seen.contains_key(id) {
                seen.insert(id.to_string(), ());
            }
            if let Some((a, b)) = ch {
                sorted.entry(id.to_string()).or_default().push(percent_difference(a, b));
            }
        }
        for v in sorted.values_mut() {
            v.sort_by(f64::total_cmp);
        }
        let empty = seen.into_keys().filter(|id| !sorted.contains_key(id)).collect();
        PercentDifferences { sorted, empty }
    }

    pub fn from_hourly(hourly: &[HourlyRecord]) -> Self {
        Self::from_pairs(hourly.iter().map(|h| (h.sensor_id.as_str(), h.channels())))
    }

    /// Per-sensor x-quantile cutoffs plus the ids of sensors with no valid records.
    pub fn cutoffs(&self, x: f64) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("percentile {x} outside [0, 1]")));
        }
        let map = self
            .sorted
            .iter()
            .map(|(id, v)| (id.clone(), quantile_sorted(v, x)))
            .collect();
        Ok((map, self.empty.clone()))
    }
}

/// Per-sensor x-quantile of the percent-difference series, using only
/// records that have both channels.
pub fn compute_per_sensor_cutoffs(hourly: &[HourlyRecord], x: f64) -> Result<(BTreeMap<String, f64>, Vec<String>)> {
    PercentDifferences::from_hourly(hourly).cutoffs(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRecord {
    pub hourly: HourlyRecord,
    pub flag: bool,
}

/// Hours without channel B are never flagged and need no cutoff.
pub fn apply_flags(hourly: Vec<HourlyRecord>, rule: &FlagRule) -> Result<Vec<FlaggedRecord>> {
    hourly
        .into_iter()
        .map(|h| {
            let flag = match h.channels() {
                Some((a, b)) => rule.is_flagged(&h.sensor_id, a, b)?,
                None => false,
            };
            Ok(FlaggedRecord { hourly: h, flag })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementMetrics {
    pub n: usize,
    /// `None` when either series is constant.
    pub pearson_r: Option<f64>,
    pub rmse: f64,
    /// `None` when the reference series is constant.
    pub nrmse: Option<f64>,
}

pub fn agreement_metrics(pred: &[f64], reference: &[f64]) -> Result<AgreementMetrics> {
    if pred.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction and reference lengths differ ({} vs {})",
            pred.len(),
            reference.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} paired values; need at least 2")));
    }
    let mse = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        / n as f64;
    let rmse = mse.sqrt();
    let sd = sample_std(reference);
    Ok(AgreementMetrics {
        n,
        pearson_r: pearson_r(pred, reference),
        rmse,
        nrmse: (sd > 0.0).then(|| rmse / sd),
    })
}
