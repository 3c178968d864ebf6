//! Forward cumulative flag means, permanent-degradation verdicts, fleet
//! flag-rate series, flagged/unflagged condition contrasts and cumulative
//! high-PM exposure.

mod contrast;
mod exposure;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flagging::FlaggedRecord;
use crate::ingest::SensorMeta;
use crate::time::hours_between;

pub use contrast::{condition_contrast, ConditionContrast, MonthlyFlagCount, VariableContrast};
pub use exposure::{cumulative_exceedances, ExposureSeries, DEFAULT_EXCEEDANCE_THRESHOLDS};

pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_MIN_HOURS: usize = 100;
/// Thresholds reported alongside the default for sensitivity checks.
pub const SENSITIVITY_THRESHOLDS: [f64; 3] = [0.3, 0.4, 0.5];

/// Suffix means `m_i = mean(f_i..f_n)` in one reverse pass.
///
/// The pass carries the integer suffix count, so each `m_i` is a single
/// division and matches a brute-force suffix mean bit for bit.
pub fn forward_cumulative_mean(flags: &[bool]) -> Vec<f64> {
    let n = flags.len();
    let mut out = vec![0.0; n];
    let mut count = 0u64;
    for i in (0..n).rev() {
        count += flags[i] as u64;
        out[i] = count as f64 / (n - i) as f64;
    }
    out
}

/// Degraded iff at least `min_hours` forward means reach `threshold`;
/// the qualifying hours need not be consecutive.
pub fn classify_permanent(forward_means: &[f64], threshold: f64, min_hours: usize) -> (bool, usize) {
    let count = forward_means.iter().filter(|m| **m >= threshold).count();
    (count >= min_hours, count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationPolicy {
    pub threshold: f64,
    pub min_hours: usize,
}

impl Default for DegradationPolicy {
    fn default() -> Self {
        DegradationPolicy {
            threshold: DEFAULT_THRESHOLD,
            min_hours: DEFAULT_MIN_HOURS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationProfile {
    pub sensor_id: String,
    pub op_hours: Vec<i64>,
    pub flags: Vec<bool>,
    pub forward_mean: Vec<f64>,
    /// `(threshold, count of m_i ≥ threshold)`, ascending threshold.
    pub hours_at_or_above: Vec<(f64, usize)>,
    pub policy: DegradationPolicy,
    pub permanently_degraded: bool,
    pub qualifying_hours: usize,
}

impl DegradationProfile {
    /// `rows` must be ordered by `op_hour` without duplicates.
    pub fn build(sensor_id: &str, rows: &[(i64, bool)], policy: DegradationPolicy) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        let op_hours: Vec<i64> = rows.iter().map(|r| r.0).collect();
        let flags: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let forward_mean = forward_cumulative_mean(&flags);
        let mut thresholds: Vec<f64> = SENSITIVITY_THRESHOLDS.to_vec();
        if !thresholds.contains(&policy.threshold) {
            thresholds.push(policy.threshold);
            thresholds.sort_by(f64::total_cmp);
        }
        let hours_at_or_above = thresholds
            .iter()
            .map(|t| (*t, classify_permanent(&forward_mean, *t, 0).1))
            .collect();
        let (permanently_degraded, qualifying_hours) =
            classify_permanent(&forward_mean, policy.threshold, policy.min_hours);
        DegradationProfile {
            sensor_id: sensor_id.to_string(),
            op_hours,
            flags,
            forward_mean,
            hours_at_or_above,
            policy,
            permanently_degraded,
            qualifying_hours,
        }
    }

    pub fn degraded_at(&self, threshold: f64, min_hours: usize) -> bool {
        classify_permanent(&self.forward_mean, threshold, min_hours).0
    }
}

/// Deploy start per sensor: the metadata value when present, else the
/// sensor's first hour in `flagged`.
pub fn deploy_starts(meta: &[SensorMeta], flagged: &[FlaggedRecord]) -> BTreeMap<String, DateTime<Utc>> {
    let mut out: BTreeMap<String, DateTime<Utc>> = BTreeMap::new();
    for r in flagged {
        out.entry(r.hourly.sensor_id.clone())
            .and_modify(|t| *t = (*t).min(r.hourly.hour))
            .or_insert(r.hourly.hour);
    }
    for m in meta {
        if let Some(ds) = m.deploy_start {
            out.insert(m.sensor_id.clone(), ds);
        }
    }
    out
}

/// Groups flagged records by sensor into `(op_hour, flag)` series sorted by op_hour.
pub fn op_hour_series(
    flagged: &[FlaggedRecord],
    starts: &BTreeMap<String, DateTime<Utc>>,
) -> BTreeMap<String, Vec<(i64, bool)>> {
    let mut out: BTreeMap<String, Vec<(i64, bool)>> = BTreeMap::new();
    for r in flagged {
        let Some(start) = starts.get(&r.hourly.sensor_id) else { continue };
        out.entry(r.hourly.sensor_id.clone())
            .or_default()
            .push((hours_between(start, &r.hourly.hour), r.flag));
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.0);
        v.dedup_by_key(|r| r.0);
    }
    out
}

pub fn build_profiles(series: &BTreeMap<String, Vec<(i64, bool)>>, policy: DegradationPolicy) -> Vec<DegradationProfile> {
    let items: Vec<(&String, &Vec<(i64, bool)>)> = series.iter().collect();
    items
        .par_iter()
        .map(|(id, rows)| DegradationProfile::build(id, rows, policy))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagRateRow {
    pub op_hour: i64,
    pub pct_flagged: f64,
    /// Over all records with `op_hour' ≤ op_hour`.
    pub pct_cumulative_flagged: f64,
    pub n_measurements: usize,
}

/// Fleet flag percentage at each operational hour.
pub fn flag_rate_by_op_hour<'a, I>(series: I) -> Vec<FlagRateRow>
where
    I: IntoIterator<Item = &'a [(i64, bool)]>,
{
    let mut per_hour: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for s in series {
        for &(h, f) in s {
            let e = per_hour.entry(h).or_default();
            e.0 += f as usize;
            e.1 += 1;
        }
    }
    let (mut cum_flags, mut cum_n) = (0usize, 0usize);
    per_hour
        .into_iter()
        .map(|(op_hour, (flags, n))| {
            cum_flags += flags;
            cum_n += n;
            FlagRateRow {
                op_hour,
                pct_flagged: 100.0 * flags as f64 / n as f64,
                pct_cumulative_flagged: 100.0 * cum_flags as f64 / cum_n as f64,
                n_measurements: n,
            }
        })
        .collect()
}
