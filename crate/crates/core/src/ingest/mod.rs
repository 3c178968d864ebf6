//! Raw record parsing, QC exclusion, hourly aggregation, burn-in trimming
//! and sensor metadata enrichment.

mod hourly;
mod meta;
mod parse;
mod qc;
mod zones;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use hourly::{aggregate_hourly, burn_in_cutoffs, trim_burn_in, trim_burn_in_fleet, HourlyConfig};
pub use meta::{read_sensor_meta, set_deploy_starts, write_sensor_meta, ClimateZone, Location, SensorMeta};
pub use parse::{parse_raw, read_raw_path, ParseDiagnostics, ParseIssue, RawColumns, RawSchema, TempUnit};
pub use qc::{qc_filter, qc_filter_with, QcBounds, QcReport};
pub use zones::{assign_climate_zone, point_in_polygon, Polygon, ZoneLookup, ZonePolygon};

/// One 15-minute observation from a dual-channel sensor.
///
/// Concentrations are µg/m³, `rh` is percent, `temp` is °C (converted at
/// parse time when the source reports °F). Present concentrations are finite
/// and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub sensor_id: String,
    pub timestamp: DateTime<Utc>,
    pub pm25_cf1_a: Option<f64>,
    pub pm25_cf1_b: Option<f64>,
    pub pm25_atm_a: Option<f64>,
    pub pm25_atm_b: Option<f64>,
    pub rh: Option<f64>,
    pub temp: Option<f64>,
}

/// Hourly aggregate of QC'd sub-hourly records.
///
/// `pm25_cf1_mean` is the midpoint of the two hourly channel means. When an
/// hour has no channel-B readings it equals the channel-A mean and
/// `pm25_cf1_b` is `None`; such hours cannot be flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub sensor_id: String,
    pub hour: DateTime<Utc>,
    pub pm25_cf1_mean: f64,
    pub pm25_cf1_a: f64,
    pub pm25_cf1_b: Option<f64>,
    pub pm25_atm_mean: Option<f64>,
    pub rh_mean: f64,
    pub temp_mean: f64,
    /// Sub-hourly records with a channel-A cf_1 value.
    pub n_subhourly: u32,
}

impl HourlyRecord {
    /// Both hourly channel means, when channel B is present.
    pub fn channels(&self) -> Option<(f64, f64)> {
        self.pm25_cf1_b.map(|b| (self.pm25_cf1_a, b))
    }
}
