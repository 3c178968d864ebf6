//! Flagged vs unflagged conditions: summaries, Welch tests and month-of-year counts.

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::flagging::FlaggedRecord;
use crate::stats::{welch_t, Summary, WelchTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableContrast {
    pub variable: String,
    pub unflagged: Option<Summary>,
    pub flagged: Option<Summary>,
    /// Welch test of flagged (x) against unflagged (y); `None` when either
    /// group has fewer than two records.
    pub welch: Option<WelchTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyFlagCount {
    /// Calendar month, 1–12.
    pub month: u32,
    pub n_unflagged: usize,
    pub n_flagged: usize,
    pub pct_unflagged: f64,
    pub pct_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionContrast {
    pub n_unflagged: usize,
    pub n_flagged: usize,
    pub variables: Vec<VariableContrast>,
    pub monthly: Vec<MonthlyFlagCount>,
}

type Getter = fn(&FlaggedRecord) -> f64;

const VARIABLES: [(&str, Getter); 3] = [
    ("pm25_cf1_mean", |r| r.hourly.pm25_cf1_mean),
    ("rh_mean", |r| r.hourly.rh_mean),
    ("temp_mean", |r| r.hourly.temp_mean),
];

pub fn condition_contrast(records: &[FlaggedRecord]) -> ConditionContrast {
    let (flagged, unflagged): (Vec<&FlaggedRecord>, Vec<&FlaggedRecord>) = records.iter().partition(|r| r.flag);
    let variables = VARIABLES
        .iter()
        .map(|(name, get)| {
            let f: Vec<f64> = flagged.iter().map(|r| get(r)).collect();
            let u: Vec<f64> = unflagged.iter().map(|r| get(r)).collect();
            VariableContrast {
                variable: name.to_string(),
                unflagged: Summary::of(&u),
                flagged: Summary::of(&f),
                welch: welch_t(&f, &u).ok(),
            }
        })
        .collect();

    let mut counts = [(0usize, 0usize); 12];
    for r in records {
        let m = r.hourly.hour.month0() as usize;
        if r.flag {
            counts[m].1 += 1;
        } else {
            counts[m].0 += 1;
        }
    }
    let monthly = counts
        .iter()
        .enumerate()
        .filter(|(_, (u, f))| u + f > 0)
        .map(|(m, &(u, f))| {
            let n = (u + f) as f64;
            MonthlyFlagCount {
                month: m as u32 + 1,
                n_unflagged: u,
                n_flagged: f,
                pct_unflagged: 100.0 * u as f64 / n,
                pct_flagged: 100.0 * f as f64 / n,
            }
        })
        .collect();

    ConditionContrast {
        n_unflagged: unflagged.len(),
        n_flagged: flagged.len(),
        variables,
        monthly,
    }
}
