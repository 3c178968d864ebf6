//! Percentile grid search for the flag cutoff against collocated reference data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{agreement_metrics, FlagRule, PercentDifferences, DEFAULT_ABS_THRESHOLD};
use crate::collocation::CollocationPair;
use crate::{Error, Result};

/// `0.00, 0.01, …, 0.99`.
pub fn default_grid() -> Vec<f64> {
    (0..100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub abs_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: default_grid(),
            abs_threshold: DEFAULT_ABS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub pearson_r: Option<f64>,
    pub rmse: Option<f64>,
    pub nrmse: Option<f64>,
    pub n_retained: usize,
    pub pct_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSweepRow {
    pub sensor_id: String,
    pub monitor_id: String,
    pub x: f64,
    pub pearson_r: Option<f64>,
    pub nrmse: Option<f64>,
    pub n_retained: usize,
    pub pct_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// One row per grid point, in ascending `x`.
    pub rows: Vec<SweepRow>,
    /// Minimum pooled nRMSE; ties go to the larger `x`.
    pub selected_x: f64,
    /// Maximum pooled Pearson r; ties go to the larger `x`.
    pub best_r_x: Option<f64>,
    pub per_pair: Vec<PairSweepRow>,
}

/// Evaluates the flag rule at every grid point on the pooled merged rows.
///
/// Cutoffs come from each sensor's merged rows only (pooled across the
/// sensor's pairs). Grid points where fewer than two rows survive get null
/// metrics and cannot be selected.
pub fn sweep_percentiles(pairs: &[CollocationPair], config: &SweepConfig) -> Result<SweepResult> {
    let mut grid = config.grid.clone();
    if grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument("sweep grid values must lie in [0, 1]".into()));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let total: usize = pairs.iter().map(|p| p.rows.len()).sum();
    if total == 0 {
        return Err(Error::InsufficientData("no merged rows to sweep".into()));
    }
    let pd = PercentDifferences::from_pairs(
        pairs
            .iter()
            .flat_map(|p| p.rows.iter().map(|r| (r.sensor_id.as_str(), Some((r.pm25_cf1_a, r.pm25_cf1_b))))),
    );

    let evaluated: Vec<(SweepRow, Vec<PairSweepRow>)> = grid
        .par_iter()
        .map(|&x| evaluate(pairs, &pd, x, config.abs_threshold, total))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(evaluated.len());
    let mut per_pair = Vec::new();
    for (row, pair_rows) in evaluated {
        rows.push(row);
        per_pair.extend(pair_rows);
    }

    let selected_x = argbest(&rows, |r| r.nrmse.map(|v| -v))
        .ok_or_else(|| Error::InsufficientData("no grid point leaves two unflagged rows with varying reference".into()))?;
    let best_r_x = argbest(&rows, |r| r.pearson_r);
    Ok(SweepResult {
        rows,
        selected_x,
        best_r_x,
        per_pair,
    })
}

// Largest score wins; scanning in ascending x with `>=` hands ties to the larger x.
fn argbest(rows: &[SweepRow], score: impl Fn(&SweepRow) -> Option<f64>) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for r in rows {
        if let Some(s) = score(r) {
            if best.is_none_or(|(b, _)| s >= b) {
                best = Some((s, r.x));
            }
        }
    }
    best.map(|(_, x)| x)
}

fn evaluate(
    pairs: &[CollocationPair],
    pd: &PercentDifferences,
    x: f64,
    abs_threshold: f64,
    total: usize,
) -> Result<(SweepRow, Vec<PairSweepRow>)> {
    let (cutoffs, _) = pd.cutoffs(x)?;
    let rule = FlagRule {
        abs_threshold,
        percentile_x: x,
        per_sensor_cutoff: cutoffs,
    };
    let mut pred = Vec::with_capacity(total);
    let mut reference = Vec::with_capacity(total);
    let mut pair_rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let start = pred.len();
        for r in &pair.rows {
            if !rule.is_flagged(&r.sensor_id, r.pm25_cf1_a, r.pm25_cf1_b)? {
                pred.push(r.pm25_cf1_mean);
                reference.push(r.pm25_ref);
            }
        }
        let kept = pred.len() - start;
        let metrics = agreement_metrics(&pred[start..], &reference[start..]).ok();
        pair_rows.push(PairSweepRow {
            sensor_id: pair.sensor_id.clone(),
            monitor_id: pair.monitor_id.clone(),
            x,
            pearson_r: metrics.and_then(|m| m.pearson_r),
            nrmse: metrics.and_then(|m| m.nrmse),
            n_retained: kept,
            pct_flagged: pct(pair.rows.len() - kept, pair.rows.len()),
        });
    }
    let metrics = agreement_metrics(&pred, &reference).ok();
    Ok((
        SweepRow {
            x,
            pearson_r: metrics.and_then(|m| m.pearson_r),
            rmse: metrics.map(|m| m.rmse),
            nrmse: metrics.and_then(|m| m.nrmse),
            n_retained: pred.len(),
            pct_flagged: pct(total - pred.len(), total),
        },
        pair_rows,
    ))
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}
