//! UTC timestamp parsing, formatting and hour arithmetic.

use chrono::{DateTime, DurationRound, NaiveDate, NaiveDateTime, SecondsFormat, TimeDelta, Utc};

use crate::{Error, Result};

/// Parses RFC 3339 (any offset, normalized to UTC), naive
/// `YYYY-MM-DD HH:MM[:SS]` / `YYYY-MM-DDTHH:MM[:SS]` read as UTC, or integer
/// Unix seconds.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc());
        }
    }
    if let Ok(secs) = s.parse::<i64>() {
        if let Some(dt) = DateTime::from_timestamp(secs, 0) {
            return Ok(dt);
        }
    }
    Err(Error::Malformed(format!("unparseable timestamp `{raw}`")))
}

/// RFC 3339 in UTC with a `Z` suffix; sub-second digits only when present.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_date(raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Malformed(format!("unparseable date `{raw}`")))
}

/// Start of the UTC hour containing `ts` (left-closed buckets `[h, h+1)`).
pub fn floor_hour(ts: &DateTime<Utc>) -> DateTime<Utc> {
    ts.duration_trunc(TimeDelta::hours(1))
        .expect("hour truncation is always representable")
}

/// Whole hours from `origin` to `ts`, both floored to the hour.
pub fn hours_between(origin: &DateTime<Utc>, ts: &DateTime<Utc>) -> i64 {
    (floor_hour(ts) - floor_hour(origin)).num_hours()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_round_trip_is_exact() {
        for raw in ["2019-06-01T00:15:00Z", "2021-07-20T23:59:59Z", "2018-01-01T00:00:00.250Z"] {
            let ts = parse_timestamp(raw).unwrap();
            assert_eq!(format_timestamp(&ts), raw);
        }
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let ts = parse_timestamp("2019-06-01T02:15:00+02:00").unwrap();
        assert_eq!(format_timestamp(&ts), "2019-06-01T00:15:00Z");
        let unix = parse_timestamp("1559348100").unwrap();
        assert_eq!(format_timestamp(&unix), "2019-06-01T00:15:00Z");
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn hour_bucketing_is_left_closed() {
        let a = parse_timestamp("2019-06-01T00:59:59Z").unwrap();
        let b = parse_timestamp("2019-06-01T01:00:00Z").unwrap();
        assert_eq!(format_timestamp(&floor_hour(&a)), "2019-06-01T00:00:00Z");
        assert_eq!(format_timestamp(&floor_hour(&b)), "2019-06-01T01:00:00Z");
        assert_eq!(hours_between(&a, &b), 1);
    }
}
