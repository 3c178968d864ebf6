//! On-disk CSV layouts shared by the CLI stages and the synthetic fleet.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::collocation::{CollocationPair, MonitorSite, ReferenceRecord};
use crate::flagging::FlaggedRecord;
use crate::ingest::{HourlyRecord, RawRecord};
use crate::time::format_timestamp;
use crate::{Error, Result};

pub const RAW_FILE: &str = "raw.csv";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const MONITORS_FILE: &str = "monitors.csv";
pub const REFERENCE_FILE: &str = "reference.csv";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const MERGED_FILE: &str = "merged.csv";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const FLAGGED_FILE: &str = "flagged.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

fn open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed(format!("{}: {other:?}", path.display())),
    }
}

/// Reads every row of a headed CSV file into `T`.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| open_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Malformed(format!("{}: {e}", path.display()))))
        .collect()
}

/// Writes `rows` with a header derived from `T`'s field names. An empty
/// input still produces the header line when `header` is given.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: Option<&[&str]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut writer = csv::WriterBuilder::new().has_headers(header.is_none()).from_writer(&mut out);
    if let Some(h) = header {
        writer.write_record(h)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    drop(writer);
    out.flush().map_err(|e| Error::io(path, e))
}

pub const RAW_HEADER: [&str; 8] = [
    "sensor_id",
    "timestamp",
    "pm25_cf1_a",
    "pm25_cf1_b",
    "pm25_atm_a",
    "pm25_atm_b",
    "temp",
    "rh",
];

#[derive(Serialize)]
struct RawRow<'a> {
    sensor_id: &'a str,
    timestamp: String,
    pm25_cf1_a: Option<f64>,
    pm25_cf1_b: Option<f64>,
    pm25_atm_a: Option<f64>,
    pm25_atm_b: Option<f64>,
    temp: Option<f64>,
    rh: Option<f64>,
}

/// Raw records in the default ingest schema (°C).
pub fn write_raw(path: &Path, records: &[RawRecord]) -> Result<()> {
    write_csv(
        path,
        records.iter().map(|r| RawRow {
            sensor_id: &r.sensor_id,
            timestamp: format_timestamp(&r.timestamp),
            pm25_cf1_a: r.pm25_cf1_a,
            pm25_cf1_b: r.pm25_cf1_b,
            pm25_atm_a: r.pm25_atm_a,
            pm25_atm_b: r.pm25_atm_b,
            temp: r.temp,
            rh: r.rh,
        }),
        Some(&RAW_HEADER),
    )
}

/// One row of `reference.csv`; the monitor id and light-scattering status
/// are derived from the method code on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub site_id: String,
    pub hour: DateTime<Utc>,
    pub pm25_ref: Option<f64>,
    pub method_code: String,
}

pub const REFERENCE_HEADER: [&str; 4] = ["site_id", "hour", "pm25_ref", "method_code"];

pub fn read_reference(path: &Path) -> Result<Vec<ReferenceRecord>> {
    Ok(read_csv::<ReferenceRow>(path)?
        .into_iter()
        .map(|r| ReferenceRecord::new(&r.site_id, r.hour, r.pm25_ref, &r.method_code))
        .collect())
}

pub fn write_reference(path: &Path, records: &[ReferenceRecord]) -> Result<()> {
    write_csv(
        path,
        records.iter().map(|r| ReferenceRow {
            site_id: r.site_id.clone(),
            hour: r.hour,
            pm25_ref: r.pm25_ref,
            method_code: r.method_code.clone(),
        }),
        Some(&REFERENCE_HEADER),
    )
}

pub const HOURLY_HEADER: [&str; 9] = [
    "sensor_id",
    "hour",
    "pm25_cf1_mean",
    "pm25_cf1_a",
    "pm25_cf1_b",
    "pm25_atm_mean",
    "rh_mean",
    "temp_mean",
    "n_subhourly",
];

/// `flagged.csv`: an hourly record plus its flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRow {
    pub sensor_id: String,
    pub hour: DateTime<Utc>,
    pub pm25_cf1_mean: f64,
    pub pm25_cf1_a: f64,
    pub pm25_cf1_b: Option<f64>,
    pub pm25_atm_mean: Option<f64>,
    pub rh_mean: f64,
    pub temp_mean: f64,
    pub n_subhourly: u32,
    #[serde(with = "flag_bit")]
    pub flag: bool,
}

mod flag_bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(flag: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*flag as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(D::Error::custom(format!("flag must be 0 or 1, got `{other}`"))),
        }
    }
}

impl From<&FlaggedRecord> for FlaggedRow {
    fn from(f: &FlaggedRecord) -> Self {
        let h = &f.hourly;
        FlaggedRow {
            sensor_id: h.sensor_id.clone(),
            hour: h.hour,
            pm25_cf1_mean: h.pm25_cf1_mean,
            pm25_cf1_a: h.pm25_cf1_a,
            pm25_cf1_b: h.pm25_cf1_b,
            pm25_atm_mean: h.pm25_atm_mean,
            rh_mean: h.rh_mean,
            temp_mean: h.temp_mean,
            n_subhourly: h.n_subhourly,
            flag: f.flag,
        }
    }
}

impl From<FlaggedRow> for FlaggedRecord {
    fn from(r: FlaggedRow) -> Self {
        FlaggedRecord {
            hourly: HourlyRecord {
                sensor_id: r.sensor_id,
                hour: r.hour,
                pm25_cf1_mean: r.pm25_cf1_mean,
                pm25_cf1_a: r.pm25_cf1_a,
                pm25_cf1_b: r.pm25_cf1_b,
                pm25_atm_mean: r.pm25_atm_mean,
                rh_mean: r.rh_mean,
                temp_mean: r.temp_mean,
                n_subhourly: r.n_subhourly,
            },
            flag: r.flag,
        }
    }
}

pub fn read_flagged(path: &Path) -> Result<Vec<FlaggedRecord>> {
    Ok(read_csv::<FlaggedRow>(path)?.into_iter().map(Into::into).collect())
}

pub fn write_flagged(path: &Path, records: &[FlaggedRecord]) -> Result<()> {
    let mut header = HOURLY_HEADER.to_vec();
    header.push("flag");
    write_csv(path, records.iter().map(FlaggedRow::from), Some(&header))
}

/// `pairs.csv`: the sensor/monitor match and merge accounting; the merged
/// rows themselves live in `merged.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub sensor_id: String,
    pub monitor_id: String,
    pub distance_m: f64,
    pub n_merged: usize,
    pub dropped_reference: usize,
    pub dropped_single_channel: usize,
}

impl From<&CollocationPair> for PairSummary {
    fn from(p: &CollocationPair) -> Self {
        PairSummary {
            sensor_id: p.sensor_id.clone(),
            monitor_id: p.monitor_id.clone(),
            distance_m: p.distance_m,
            n_merged: p.rows.len(),
            dropped_reference: p.dropped_reference,
            dropped_single_channel: p.dropped_single_channel,
        }
    }
}

/// Reassembles pairs from `pairs.csv` and `merged.csv`.
pub fn read_pairs(pairs_path: &Path, merged_path: &Path) -> Result<Vec<CollocationPair>> {
    let summaries: Vec<PairSummary> = read_csv(pairs_path)?;
    let mut merged: std::collections::BTreeMap<(String, String), Vec<crate::MergedRow>> = Default::default();
    for row in read_csv::<crate::MergedRow>(merged_path)? {
        merged.entry((row.sensor_id.clone(), row.monitor_id.clone())).or_default().push(row);
    }
    Ok(summaries
        .into_iter()
        .map(|s| {
            let rows = merged.remove(&(s.sensor_id.clone(), s.monitor_id.clone())).unwrap_or_default();
            CollocationPair {
                sensor_id: s.sensor_id,
                monitor_id: s.monitor_id,
                distance_m: s.distance_m,
                rows,
                dropped_reference: s.dropped_reference,
                dropped_single_channel: s.dropped_single_channel,
            }
        })
        .collect())
}

pub fn write_pairs(pairs_path: &Path, merged_path: &Path, pairs: &[CollocationPair]) -> Result<()> {
    write_csv(pairs_path, pairs.iter().map(PairSummary::from), None::<&[&str]>)?;
    write_csv(merged_path, pairs.iter().flat_map(|p| p.rows.iter()), None::<&[&str]>)
}

pub fn read_hourly(path: &Path) -> Result<Vec<HourlyRecord>> {
    read_csv(path)
}

pub fn write_hourly(path: &Path, records: &[HourlyRecord]) -> Result<()> {
    write_csv(path, records, Some(&HOURLY_HEADER))
}

/// `monitors.csv`: `site_id,lat,lon,method_code`, one row per
/// site and method.
pub fn read_monitors(path: &Path) -> Result<Vec<MonitorSite>> {
    read_csv(path)
}

pub fn write_monitors(path: &Path, monitors: &[MonitorSite]) -> Result<()> {
    write_csv(path, monitors, Some(&["site_id", "lat", "lon", "method_code"]))
}
