use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HourlyRecord, RawRecord};
use crate::time::floor_hour;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HourlyConfig {
    /// Minimum sub-hourly records with channel-A cf_1 for an hour to count.
    pub min_subhourly: u32,
}

impl Default for HourlyConfig {
    fn default() -> Self {
        HourlyConfig { min_subhourly: 3 }
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn total_order_key(r: &RawRecord) -> [f64; 6] {
    let f = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    [
        f(r.pm25_cf1_a),
        f(r.pm25_cf1_b),
        f(r.pm25_atm_a),
        f(r.pm25_atm_b),
        f(r.rh),
        f(r.temp),
    ]
}

fn aggregate_group(sensor_id: &str, hour: DateTime<Utc>, mut group: Vec<&RawRecord>, min: u32) -> Option<HourlyRecord> {
    // Fixed summation order makes the means independent of input order.
    group.sort_by(|x, y| {
        x.timestamp.cmp(&y.timestamp).then_with(|| {
            let (kx, ky) = (total_order_key(x), total_order_key(y));
            kx.iter()
                .zip(&ky)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let n_a = group.iter().filter(|r| r.pm25_cf1_a.is_some()).count() as u32;
    if n_a < min {
        return None;
    }
    let a = mean_of(group.iter().filter_map(|r| r.pm25_cf1_a))?;
    let b = mean_of(group.iter().filter_map(|r| r.pm25_cf1_b));
    let atm_a = mean_of(group.iter().filter_map(|r| r.pm25_atm_a));
    let atm_b = mean_of(group.iter().filter_map(|r| r.pm25_atm_b));
    let rh = mean_of(group.iter().filter_map(|r| r.rh))?;
    let temp = mean_of(group.iter().filter_map(|r| r.temp))?;
    let pm25_atm_mean = match (atm_a, atm_b) {
        (Some(x), Some(y)) => Some((x + y) / 2.0),
        (x, y) => x.or(y),
    };
    Some(HourlyRecord {
        sensor_id: sensor_id.to_string(),
        hour,
        pm25_cf1_mean: b.map_or(a, |b| (a + b) / 2.0),
        pm25_cf1_a: a,
        pm25_cf1_b: b,
        pm25_atm_mean,
        rh_mean: rh,
        temp_mean: temp,
        n_subhourly: n_a,
    })
}

/// Groups records by `(sensor_id, UTC hour)` and emits hourly means for hours
/// meeting the channel-A completeness threshold. Output is sorted by sensor,
/// then hour.
pub fn aggregate_hourly(records: &[RawRecord], config: &HourlyConfig) -> Vec<HourlyRecord> {
    let mut groups: BTreeMap<(&str, DateTime<Utc>), Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.sensor_id.as_str(), floor_hour(&r.timestamp)))
            .or_default()
            .push(r);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    groups
        .into_par_iter()
        .filter_map(|((sensor, hour), group)| aggregate_group(sensor, hour, group, config.min_subhourly))
        .collect()
}

/// Drops the first `n_hours` records (hours with data) of one sensor's
/// hour-sorted series.
pub fn trim_burn_in(series: &[HourlyRecord], n_hours: usize) -> &[HourlyRecord] {
    &series[n_hours.min(series.len())..]
}

/// Per-sensor burn-in trim on a fleet series sorted by sensor then hour.
pub fn trim_burn_in_fleet(records: Vec<HourlyRecord>, n_hours: usize) -> Vec<HourlyRecord> {
    if n_hours == 0 {
        return records;
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    records
        .into_iter()
        .filter(|r| {
            let count = seen.entry(r.sensor_id.clone()).or_insert(0);
            *count += 1;
            *count > n_hours
        })
        .collect()
}

/// First hour after each sensor's burn-in window, or `None` when the whole
/// series is burn-in. Rows at or after the cutoff survive a trim.
pub fn burn_in_cutoffs(records: &[HourlyRecord], n_hours: usize) -> BTreeMap<String, Option<DateTime<Utc>>> {
    let mut by_sensor: BTreeMap<String, Vec<DateTime<Utc>>> = BTreeMap::new();
    for r in records {
        by_sensor.entry(r.sensor_id.clone()).or_default().push(r.hour);
    }
    by_sensor
        .into_iter()
        .map(|(id, mut hours)| {
            hours.sort();
            let cutoff = hours.get(n_hours).copied();
            (id, cutoff)
        })
        .collect()
}
