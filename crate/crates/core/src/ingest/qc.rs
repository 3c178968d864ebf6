use serde::{Deserialize, Serialize};

use super::RawRecord;

/// Exclusion bounds applied to 15-minute records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcBounds {
    /// Records with BOTH cf_1 channels strictly above this are removed (µg/m³).
    pub max_pm: f64,
    /// Records with `temp <= temp_min_c` are removed.
    pub temp_min_c: f64,
    /// Records with `temp >= temp_max_c` are removed.
    pub temp_max_c: f64,
    /// Records with `rh > rh_max` are removed.
    pub rh_max: f64,
}

impl Default for QcBounds {
    fn default() -> Self {
        QcBounds {
            max_pm: 1500.0,
            temp_min_c: -50.0,
            temp_max_c: 100.0,
            rh_max: 99.0,
        }
    }
}

/// Per-rule rejection counts; each record is attributed to the first rule
/// it fails, so `rejected() + retained == input`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcReport {
    pub input: u64,
    pub missing_pm: u64,
    pub missing_met: u64,
    pub both_over_1500: u64,
    pub temp_out_of_range: u64,
    pub rh_over_99: u64,
    pub retained: u64,
}

impl QcReport {
    pub fn rejected(&self) -> u64 {
        self.missing_pm + self.missing_met + self.both_over_1500 + self.temp_out_of_range + self.rh_over_99
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rejection {
    MissingPm,
    MissingMet,
    BothOverRange,
    TempOutOfRange,
    RhOverMax,
}

fn first_failing_rule(r: &RawRecord, b: &QcBounds) -> Option<Rejection> {
    if r.pm25_cf1_a.is_none() && r.pm25_cf1_b.is_none() {
        return Some(Rejection::MissingPm);
    }
    let (Some(temp), Some(rh)) = (r.temp, r.rh) else {
        return Some(Rejection::MissingMet);
    };
    if let (Some(a), Some(bv)) = (r.pm25_cf1_a, r.pm25_cf1_b) {
        if a > b.max_pm && bv > b.max_pm {
            return Some(Rejection::BothOverRange);
        }
    }
    if temp <= b.temp_min_c || temp >= b.temp_max_c {
        return Some(Rejection::TempOutOfRange);
    }
    if rh > b.rh_max {
        return Some(Rejection::RhOverMax);
    }
    None
}

/// Applies the exclusion rules with default bounds.
pub fn qc_filter(records: Vec<RawRecord>) -> (Vec<RawRecord>, QcReport) {
    qc_filter_with(records, &QcBounds::default())
}

/// Applies, in order: missing both cf_1 channels; missing T or RH; both
/// channels above `max_pm`; T outside the open interval; RH above `rh_max`.
pub fn qc_filter_with(records: Vec<RawRecord>, bounds: &QcBounds) -> (Vec<RawRecord>, QcReport) {
    let mut report = QcReport {
        input: records.len() as u64,
        ..Default::default()
    };
    let retained: Vec<RawRecord> = records
        .into_iter()
        .filter(|r| match first_failing_rule(r, bounds) {
            None => true,
            Some(rule) => {
                match rule {
                    Rejection::MissingPm => report.missing_pm += 1,
                    Rejection::MissingMet => report.missing_met += 1,
                    Rejection::BothOverRange => report.both_over_1500 += 1,
                    Rejection::TempOutOfRange => report.temp_out_of_range += 1,
                    Rejection::RhOverMax => report.rh_over_99 += 1,
                }
                false
            }
        })
        .collect();
    report.retained = retained.len() as u64;
    (retained, report)
}
