//! Request construction and response parsing for the two upstream APIs.

use chrono::{DateTime, NaiveDate, NaiveTime, TimeDelta, Utc};
use serde_json::Value;

use super::transport::Request;
use super::Credentials;
use crate::collocation::ReferenceRecord;
use crate::ingest::{RawRecord, TempUnit};
use crate::{Error, Result};

pub const SENSOR_API_BASE: &str = "https://api.purpleair.com/v1";
pub const AQS_API_BASE: &str = "https://aqs.epa.gov/data/api";
/// AQS parameter code for PM2.5 local conditions.
pub const AQS_PM25_PARAM: &str = "88101";

const SENSOR_FIELDS: [&str; 6] = [
    "pm2.5_cf_1_a",
    "pm2.5_cf_1_b",
    "pm2.5_atm_a",
    "pm2.5_atm_b",
    "humidity",
    "temperature",
];

pub fn sensor_history_request(base: &str, id: &str, start: DateTime<Utc>, end: DateTime<Utc>, creds: &Credentials) -> Request {
    let headers = match creds {
        Credentials::Sensor { api_key } => vec![("X-API-Key".to_string(), api_key.clone())],
        Credentials::Aqs { .. } => Vec::new(),
    };
    Request {
        url: format!("{}/sensors/{id}/history", base.trim_end_matches('/')),
        query: vec![
            ("start_timestamp".into(), start.timestamp().to_string()),
            ("end_timestamp".into(), end.timestamp().to_string()),
            ("fields".into(), SENSOR_FIELDS.join(",")),
        ],
        headers,
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64().filter(|x| x.is_finite()),
        Value::String(s) => s.trim().parse().ok().filter(|x: &f64| x.is_finite()),
        _ => None,
    }
}

/// Parses a `{"fields": [...], "data": [[...], ...]}` history body into raw
/// records sorted by time. Temperature arrives in °F; negative
/// concentrations are treated as missing, matching the ingest parser's
/// rejection of negative readings.
pub fn parse_sensor_history(id: &str, body: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Vec<RawRecord>> {
    let doc: Value = serde_json::from_str(body)?;
    let fields: Vec<&str> = doc
        .get("fields")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Malformed("sensor history response has no `fields`".into()))?
        .iter()
        .map(|f| f.as_str().unwrap_or(""))
        .collect();
    let col = |name: &str| fields.iter().position(|f| *f == name);
    let t_col = col("time_stamp").ok_or_else(|| Error::MissingColumn {
        column: "time_stamp".into(),
        context: "sensor history response".into(),
    })?;
    let cols: Vec<Option<usize>> = SENSOR_FIELDS.iter().map(|f| col(f)).collect();
    let empty = Vec::new();
    let rows = doc.get("data").and_then(Value::as_array).unwrap_or(&empty);
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let Some(row) = row.as_array() else { continue };
        let Some(ts) = row.get(t_col).and_then(Value::as_i64).and_then(|s| DateTime::from_timestamp(s, 0)) else {
            continue;
        };
        if ts < start || ts >= end {
            continue;
        }
        let get = |k: usize| cols[k].and_then(|c| row.get(c)).and_then(number);
        let conc = |k: usize| get(k).filter(|v| *v >= 0.0);
        out.push(RawRecord {
            sensor_id: id.to_string(),
            timestamp: ts,
            pm25_cf1_a: conc(0),
            pm25_cf1_b: conc(1),
            pm25_atm_a: conc(2),
            pm25_atm_b: conc(3),
            rh: get(4),
            temp: get(5).map(|f| TempUnit::Fahrenheit.to_celsius(f)),
        });
    }
    out.sort_by_key(|r| r.timestamp);
    Ok(out)
}

/// Splits a 9-digit AQS site id (`SSCCCNNNN`, dashes allowed) into
/// state, county and site number.
pub fn split_site_id(id: &str) -> Result<(String, String, String)> {
    let digits: String = id.chars().filter(|c| *c != '-').collect();
    if digits.len() != 9 || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::InvalidArgument(format!("AQS site id `{id}` is not SSCCCNNNN")));
    }
    Ok((digits[0..2].into(), digits[2..5].into(), digits[5..9].into()))
}

pub fn aqs_request(base: &str, site: &str, start: DateTime<Utc>, end: DateTime<Utc>, creds: &Credentials) -> Result<Request> {
    let (state, county, number) = split_site_id(site)?;
    let (email, key) = match creds {
        Credentials::Aqs { email, key } => (email.clone(), key.clone()),
        Credentials::Sensor { .. } => (String::new(), String::new()),
    };
    let last = end - TimeDelta::seconds(1);
    Ok(Request {
        url: format!("{}/sampleData/bySite", base.trim_end_matches('/')),
        query: vec![
            ("email".into(), email),
            ("key".into(), key),
            ("param".into(), AQS_PM25_PARAM.into()),
            ("bdate".into(), start.format("%Y%m%d").to_string()),
            ("edate".into(), last.format("%Y%m%d").to_string()),
            ("state".into(), state),
            ("county".into(), county),
            ("site".into(), number),
        ],
        headers: Vec::new(),
    })
}

fn string_field(v: &Value, key: &str) -> Option<String> {
    match v.get(key)? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses an AQS `sampleData` body. Only hourly samples inside `[start,
/// end)` are kept; values (including negatives) and method codes are kept
/// verbatim. An empty or "No data" response yields no rows.
pub fn parse_aqs(site: &str, body: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Vec<ReferenceRecord>> {
    let doc: Value = serde_json::from_str(body)?;
    if let Some(status) = doc
        .get("Header")
        .and_then(|h| h.get(0))
        .and_then(|h| h.get("status"))
        .and_then(Value::as_str)
    {
        if status.eq_ignore_ascii_case("failed") {
            let detail = doc["Header"][0].get("error").map(Value::to_string).unwrap_or_default();
            return Err(Error::Http(format!("AQS request failed: {detail}")));
        }
    }
    let (state, county, site_number) = split_site_id(site)?;
    let site_id = format!("{state}{county}{site_number}");
    let empty = Vec::new();
    let rows = doc.get("Data").and_then(Value::as_array).unwrap_or(&empty);
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if let Some(d) = string_field(row, "sample_duration") {
            if !d.eq_ignore_ascii_case("1 HOUR") {
                continue;
            }
        }
        let (Some(date), Some(time)) = (string_field(row, "date_gmt"), string_field(row, "time_gmt")) else {
            continue;
        };
        let (Ok(date), Ok(time)) = (
            NaiveDate::parse_from_str(&date, "%Y-%m-%d"),
            NaiveTime::parse_from_str(&time, "%H:%M"),
        ) else {
            continue;
        };
        let hour = date.and_time(time).and_utc();
        if hour < start || hour >= end {
            continue;
        }
        let method = string_field(row, "method_code").unwrap_or_default();
        let value = row.get("sample_measurement").and_then(number);
        out.push(ReferenceRecord::new(&site_id, hour, value, &method));
    }
    out.sort_by(|a, b| (a.hour, &a.method_code).cmp(&(b.hour, &b.method_code)));
    Ok(out)
}
