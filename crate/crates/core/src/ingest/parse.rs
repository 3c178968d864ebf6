use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RawRecord;
use crate::time::parse_timestamp;
use crate::{Error, Result};

/// Unit of the temperature column in a raw source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TempUnit {
    #[default]
    #[serde(rename = "C", alias = "c", alias = "celsius")]
    Celsius,
    #[serde(rename = "F", alias = "f", alias = "fahrenheit")]
    Fahrenheit,
}

impl TempUnit {
    pub fn to_celsius(self, value: f64) -> f64 {
        match self {
            TempUnit::Celsius => value,
            TempUnit::Fahrenheit => (value - 32.0) * 5.0 / 9.0,
        }
    }
}

/// Source column name for each raw field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawColumns {
    pub sensor_id: String,
    pub timestamp: String,
    pub pm25_cf1_a: String,
    pub pm25_cf1_b: String,
    pub pm25_atm_a: String,
    pub pm25_atm_b: String,
    pub temp: String,
    pub rh: String,
}

impl Default for RawColumns {
    fn default() -> Self {
        RawColumns {
            sensor_id: "sensor_id".into(),
            timestamp: "timestamp".into(),
            pm25_cf1_a: "pm25_cf1_a".into(),
            pm25_cf1_b: "pm25_cf1_b".into(),
            pm25_atm_a: "pm25_atm_a".into(),
            pm25_atm_b: "pm25_atm_b".into(),
            temp: "temp".into(),
            rh: "rh".into(),
        }
    }
}

/// Column mapping plus declared temperature unit for a raw source.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RawSchema {
    pub columns: RawColumns,
    pub temp_unit: TempUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based line number in the source (header is line 1).
    pub line: u64,
    pub reason: String,
}

/// Row accounting for one parse.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub rows_read: u64,
    pub rows_parsed: u64,
    pub rows_skipped: u64,
    /// First few skipped rows with reasons.
    pub issues: Vec<ParseIssue>,
}

const MAX_REPORTED_ISSUES: usize = 100;

impl ParseDiagnostics {
    fn skip(&mut self, line: u64, reason: String) {
        self.rows_skipped += 1;
        if self.issues.len() < MAX_REPORTED_ISSUES {
            self.issues.push(ParseIssue { line, reason });
        }
    }

    pub fn merge(&mut self, other: ParseDiagnostics) {
        self.rows_read += other.rows_read;
        self.rows_parsed += other.rows_parsed;
        self.rows_skipped += other.rows_skipped;
        for issue in other.issues {
            if self.issues.len() < MAX_REPORTED_ISSUES {
                self.issues.push(issue);
            }
        }
    }
}

fn is_missing(raw: &str) -> bool {
    matches!(
        raw.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

fn parse_number(raw: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    if is_missing(raw) {
        return Ok(None);
    }
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("{field}: `{raw}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{field}: non-finite value `{raw}`"));
    }
    Ok(Some(v))
}

fn parse_concentration(raw: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    let v = parse_number(raw, field)?;
    if let Some(x) = v {
        if x < 0.0 {
            return Err(format!("{field}: negative concentration {x}"));
        }
    }
    Ok(v)
}

/// Parses delimited raw sensor records in input order.
///
/// Unparseable rows are skipped and counted in the diagnostics; a missing
/// schema column is fatal.
pub fn parse_raw<R: Read>(source: R, schema: &RawSchema) -> Result<(Vec<RawRecord>, ParseDiagnostics)> {
    parse_raw_named(source, schema, "raw sensor input")
}

fn parse_raw_named<R: Read>(
    source: R,
    schema: &RawSchema,
    context: &str,
) -> Result<(Vec<RawRecord>, ParseDiagnostics)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                context: context.to_string(),
            })
    };
    let cols = &schema.columns;
    let idx = [
        find(&cols.sensor_id)?,
        find(&cols.timestamp)?,
        find(&cols.pm25_cf1_a)?,
        find(&cols.pm25_cf1_b)?,
        find(&cols.pm25_atm_a)?,
        find(&cols.pm25_atm_b)?,
        find(&cols.temp)?,
        find(&cols.rh)?,
    ];

    let mut diag = ParseDiagnostics::default();
    let mut records = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                diag.rows_read += 1;
                diag.skip(line, e.to_string());
                continue;
            }
        }
        diag.rows_read += 1;
        let line = record.position().map_or(line, |p| p.line());
        if record.len() != headers.len() {
            diag.skip(line, format!("expected {} fields, found {}", headers.len(), record.len()));
            continue;
        }
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let parsed = (|| -> std::result::Result<RawRecord, String> {
            let sensor_id = field(0).trim().to_string();
            if sensor_id.is_empty() {
                return Err("empty sensor_id".into());
            }
            let timestamp = parse_timestamp(field(1)).map_err(|e| e.to_string())?;
            Ok(RawRecord {
                sensor_id,
                timestamp,
                pm25_cf1_a: parse_concentration(field(2), "pm25_cf1_a")?,
                pm25_cf1_b: parse_concentration(field(3), "pm25_cf1_b")?,
                pm25_atm_a: parse_concentration(field(4), "pm25_atm_a")?,
                pm25_atm_b: parse_concentration(field(5), "pm25_atm_b")?,
                temp: parse_number(field(6), "temp")?.map(|t| schema.temp_unit.to_celsius(t)),
                rh: parse_number(field(7), "rh")?,
            })
        })();
        match parsed {
            Ok(r) => {
                diag.rows_parsed += 1;
                records.push(r);
            }
            Err(reason) => diag.skip(line, reason),
        }
    }
    Ok((records, diag))
}

/// Reads one raw CSV file, or every `*.csv` file of a directory in sorted
/// file-name order.
pub fn read_raw_path(path: &Path, schema: &RawSchema) -> Result<(Vec<RawRecord>, ParseDiagnostics)> {
    let files = if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut all = Vec::new();
    let mut diag = ParseDiagnostics::default();
    for file in files {
        let handle = File::open(&file).map_err(|e| Error::io(&file, e))?;
        let (records, d) = parse_raw_named(handle, schema, &file.display().to_string())?;
        all.extend(records);
        diag.merge(d);
    }
    Ok((all, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::format_timestamp;

    const HEADER: &str = "sensor_id,timestamp,pm25_cf1_a,pm25_cf1_b,pm25_atm_a,pm25_atm_b,temp,rh\n";

    #[test]
    fn fahrenheit_is_converted() {
        let src = format!("{HEADER}s1,2019-06-01T00:15:00Z,10,11,9,10,77,40\n");
        let schema = RawSchema { temp_unit: TempUnit::Fahrenheit, ..Default::default() };
        let (recs, diag) = parse_raw(src.as_bytes(), &schema).unwrap();
        assert_eq!(diag.rows_parsed, 1);
        assert!((recs[0].temp.unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn empty_channel_is_missing_and_timestamp_round_trips() {
        let src = format!("{HEADER}s1,2019-06-01T00:15:00Z,10,,9,,20,40\n");
        let (recs, _) = parse_raw(src.as_bytes(), &RawSchema::default()).unwrap();
        assert_eq!(recs[0].pm25_cf1_b, None);
        assert_eq!(recs[0].pm25_atm_b, None);
        assert_eq!(format_timestamp(&recs[0].timestamp), "2019-06-01T00:15:00Z");
    }

    #[test]
    fn bad_rows_are_counted_not_dropped_silently() {
        let src = format!(
            "{HEADER}s1,2019-06-01T00:15:00Z,10,11,9,10,20,40\n\
             s1,not-a-time,10,11,9,10,20,40\n\
             s1,2019-06-01T00:30:00Z,-3,11,9,10,20,40\n\
             s1,2019-06-01T00:45:00Z,abc,11,9,10,20,40\n\
             s1,2019-06-01T01:00:00Z,10,11\n\
             ,2019-06-01T01:15:00Z,10,11,9,10,20,40\n\
             s1,2019-06-01T01:30:00Z,10,11,9,10,20,40\n"
        );
        let (recs, diag) = parse_raw(src.as_bytes(), &RawSchema::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(diag.rows_read, 7);
        assert_eq!(diag.rows_skipped, 5);
        assert_eq!(diag.issues[0].line, 3);
        assert!(diag.issues[1].reason.contains("negative"));
    }

    #[test]
    fn missing_schema_column_is_fatal_and_named() {
        let src = "sensor_id,timestamp,pm25_cf1_a\ns1,2019-06-01T00:15:00Z,1\n";
        match parse_raw(src.as_bytes(), &RawSchema::default()) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "pm25_cf1_b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_column_mapping() {
        let src = "id,time_stamp,a,b,atm_a,atm_b,temperature,humidity\n\
                   77,1559348100,1,2,1,2,50,60\n";
        let schema: RawSchema = serde_json::from_str(
            r#"{"columns":{"sensor_id":"id","timestamp":"time_stamp","pm25_cf1_a":"a",
                "pm25_cf1_b":"b","pm25_atm_a":"atm_a","pm25_atm_b":"atm_b",
                "temp":"temperature","rh":"humidity"},"temp_unit":"F"}"#,
        )
        .unwrap();
        let (recs, _) = parse_raw(src.as_bytes(), &schema).unwrap();
        assert_eq!(recs[0].sensor_id, "77");
        assert!((recs[0].temp.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(recs[0].rh, Some(60.0));
    }
}
