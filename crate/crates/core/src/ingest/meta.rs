use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::RawRecord;
use crate::time::{format_timestamp, parse_timestamp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Inside,
    Outside,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Location::Inside => "inside",
            Location::Outside => "outside",
        })
    }
}

impl FromStr for Location {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inside" | "indoor" | "in" => Ok(Location::Inside),
            "outside" | "outdoor" | "out" => Ok(Location::Outside),
            other => Err(Error::Malformed(format!("unknown device location `{other}`"))),
        }
    }
}

/// IECC climate zone; `Unknown` covers sensors outside every zone polygon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClimateZone {
    Cold,
    #[serde(rename = "Hot-Dry")]
    HotDry,
    #[serde(rename = "Hot-Humid")]
    HotHumid,
    Marine,
    #[serde(rename = "Mixed-Dry")]
    MixedDry,
    #[serde(rename = "Mixed-Humid")]
    MixedHumid,
    SubArctic,
    VeryCold,
    #[default]
    Unknown,
}

impl ClimateZone {
    pub const ALL: [ClimateZone; 9] = [
        ClimateZone::Cold,
        ClimateZone::HotDry,
        ClimateZone::HotHumid,
        ClimateZone::Marine,
        ClimateZone::MixedDry,
        ClimateZone::MixedHumid,
        ClimateZone::SubArctic,
        ClimateZone::VeryCold,
        ClimateZone::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClimateZone::Cold => "Cold",
            ClimateZone::HotDry => "Hot-Dry",
            ClimateZone::HotHumid => "Hot-Humid",
            ClimateZone::Marine => "Marine",
            ClimateZone::MixedDry => "Mixed-Dry",
            ClimateZone::MixedHumid => "Mixed-Humid",
            ClimateZone::SubArctic => "SubArctic",
            ClimateZone::VeryCold => "VeryCold",
            ClimateZone::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for ClimateZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClimateZone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "cold" => ClimateZone::Cold,
            "hotdry" => ClimateZone::HotDry,
            "hothumid" => ClimateZone::HotHumid,
            "marine" => ClimateZone::Marine,
            "mixeddry" => ClimateZone::MixedDry,
            "mixedhumid" => ClimateZone::MixedHumid,
            "subarctic" => ClimateZone::SubArctic,
            "verycold" => ClimateZone::VeryCold,
            "" | "unknown" | "na" | "none" | "noinformation" => ClimateZone::Unknown,
            _ => return Err(Error::Malformed(format!("unknown climate zone `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub sensor_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub location: Location,
    /// First retained record; `None` until set from data.
    pub deploy_start: Option<DateTime<Utc>>,
    pub climate_zone: ClimateZone,
}

#[derive(Debug, Serialize, Deserialize)]
struct SensorRow {
    sensor_id: String,
    lat: f64,
    lon: f64,
    location: String,
    #[serde(default)]
    deploy_start: Option<String>,
    #[serde(default)]
    climate_zone: Option<String>,
}

/// Reads `sensor_id,lat,lon,location[,deploy_start,climate_zone]`.
pub fn read_sensor_meta(path: &Path) -> Result<Vec<SensorMeta>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    for col in ["sensor_id", "lat", "lon", "location"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn {
                column: col.into(),
                context: path.display().to_string(),
            });
        }
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<SensorRow>() {
        let row = row?;
        if !(row.lat.abs() <= 90.0 && row.lon.abs() <= 180.0) {
            return Err(Error::Malformed(format!(
                "sensor {} has invalid coordinates ({}, {})",
                row.sensor_id, row.lat, row.lon
            )));
        }
        let deploy_start = match row.deploy_start.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(ts) => Some(parse_timestamp(ts)?),
        };
        let climate_zone = match row.climate_zone.as_deref() {
            None => ClimateZone::Unknown,
            Some(z) => z.parse()?,
        };
        out.push(SensorMeta {
            sensor_id: row.sensor_id,
            latitude: row.lat,
            longitude: row.lon,
            location: row.location.parse()?,
            deploy_start,
            climate_zone,
        });
    }
    Ok(out)
}

pub fn write_sensor_meta(path: &Path, sensors: &[SensorMeta]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for s in sensors {
        writer.serialize(SensorRow {
            sensor_id: s.sensor_id.clone(),
            lat: s.latitude,
            lon: s.longitude,
            location: s.location.to_string(),
            deploy_start: s.deploy_start.as_ref().map(format_timestamp),
            climate_zone: Some(s.climate_zone.to_string()),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Sets each sensor's `deploy_start` to its earliest retained record.
/// Sensors without records keep their previous value.
pub fn set_deploy_starts(meta: &mut [SensorMeta], retained: &[RawRecord]) {
    let mut first: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    for r in retained {
        first
            .entry(r.sensor_id.as_str())
            .and_modify(|t| {
                if r.timestamp < *t {
                    *t = r.timestamp;
                }
            })
            .or_insert(r.timestamp);
    }
    for m in meta.iter_mut() {
        if let Some(t) = first.get(m.sensor_id.as_str()) {
            m.deploy_start = Some(*t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_label_variants() {
        for (raw, want) in [
            ("Hot-Dry", ClimateZone::HotDry),
            ("hot dry", ClimateZone::HotDry),
            ("Very Cold", ClimateZone::VeryCold),
            ("Sub Arctic", ClimateZone::SubArctic),
            ("Subarctic", ClimateZone::SubArctic),
            ("NA", ClimateZone::Unknown),
        ] {
            assert_eq!(raw.parse::<ClimateZone>().unwrap(), want, "{raw}");
        }
        assert!("Tropical".parse::<ClimateZone>().is_err());
        for z in ClimateZone::ALL {
            assert_eq!(z.as_str().parse::<ClimateZone>().unwrap(), z);
        }
    }

    #[test]
    fn meta_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sensors.csv");
        std::fs::write(&path, "sensor_id,lat,lon,location\na,34.1,-118.2,outside\nb,40,-75,inside\n").unwrap();
        let mut meta = read_sensor_meta(&path).unwrap();
        assert_eq!(meta[1].location, Location::Inside);
        meta[0].deploy_start = Some(parse_timestamp("2019-01-01T03:15:00Z").unwrap());
        meta[0].climate_zone = ClimateZone::HotDry;
        let out = dir.path().join("enriched.csv");
        write_sensor_meta(&out, &meta).unwrap();
        assert_eq!(read_sensor_meta(&out).unwrap(), meta);

        std::fs::write(&path, "sensor_id,lat,lon,location\na,95,0,outside\n").unwrap();
        assert!(read_sensor_meta(&path).is_err());
        std::fs::write(&path, "sensor_id,lat,location\na,5,outside\n").unwrap();
        assert!(matches!(read_sensor_meta(&path), Err(Error::MissingColumn { .. })));
    }
}
