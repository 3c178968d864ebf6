//! Climate-zone assignment from either a `sensor_id,zone` table or a GeoJSON
//! FeatureCollection of labelled (multi)polygons.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::{ClimateZone, SensorMeta};
use crate::{Error, Result};

/// A polygon ring set: the first ring is the exterior, the rest are holes.
/// Coordinates are `(lon, lat)` as in GeoJSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Vec<(f64, f64)>>,
}

impl Polygon {
    /// Boundary points count as inside; a point on a hole's edge is inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let Some((outer, holes)) = self.rings.split_first() else {
            return false;
        };
        if on_ring_boundary(outer, lon, lat) {
            return true;
        }
        if !ring_contains(outer, lon, lat) {
            return false;
        }
        for hole in holes {
            if on_ring_boundary(hole, lon, lat) {
                return true;
            }
            if ring_contains(hole, lon, lat) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZonePolygon {
    pub zone: ClimateZone,
    pub parts: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZoneLookup {
    Table(BTreeMap<String, ClimateZone>),
    /// Matched in file order; the first containing feature wins.
    Polygons(Vec<ZonePolygon>),
}

impl ZoneLookup {
    /// Loads a `.geojson`/`.json` polygon file or a CSV table, chosen by extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("json" | "geojson") => Self::from_geojson(&text),
            _ => Self::from_table(text.as_bytes()),
        }
    }

    pub fn from_table(source: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        let idx = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn {
                column: name.into(),
                context: "zone table".into(),
            })
        };
        let (id_col, zone_col) = (idx("sensor_id")?, idx("zone")?);
        let mut table = BTreeMap::new();
        for row in reader.records() {
            let row = row?;
            let id = row.get(id_col).unwrap_or("").trim();
            if id.is_empty() {
                return Err(Error::Malformed("zone table row with empty sensor_id".into()));
            }
            let zone = row.get(zone_col).unwrap_or("").parse()?;
            table.insert(id.to_string(), zone);
        }
        Ok(ZoneLookup::Table(table))
    }

    pub fn from_geojson(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Malformed("zone file is not a FeatureCollection".into()))?;
        let mut out = Vec::with_capacity(features.len());
        for (i, feature) in features.iter().enumerate() {
            let props = feature.get("properties");
            let label = props
                .and_then(|p| p.get("zone").or_else(|| p.get("climate_zone")))
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Malformed(format!("feature {i} has no zone property")))?;
            let geom = feature
                .get("geometry")
                .ok_or_else(|| Error::Malformed(format!("feature {i} has no geometry")))?;
            let coords = geom
                .get("coordinates")
                .ok_or_else(|| Error::Malformed(format!("feature {i} geometry has no coordinates")))?;
            let parts = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![parse_polygon(coords, i)?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| Error::Malformed(format!("feature {i}: bad MultiPolygon")))?
                    .iter()
                    .map(|p| parse_polygon(p, i))
                    .collect::<Result<_>>()?,
                other => {
                    return Err(Error::Malformed(format!(
                        "feature {i}: unsupported geometry type {other:?}"
                    )))
                }
            };
            out.push(ZonePolygon {
                zone: label.parse()?,
                parts,
            });
        }
        Ok(ZoneLookup::Polygons(out))
    }

    pub fn zone_for(&self, meta: &SensorMeta) -> ClimateZone {
        match self {
            ZoneLookup::Table(t) => t.get(&meta.sensor_id).copied().unwrap_or(ClimateZone::Unknown),
            ZoneLookup::Polygons(polys) => polys
                .iter()
                .find(|z| z.parts.iter().any(|p| p.contains(meta.longitude, meta.latitude)))
                .map(|z| z.zone)
                .unwrap_or(ClimateZone::Unknown),
        }
    }
}

pub fn assign_climate_zone(mut meta: SensorMeta, zones: &ZoneLookup) -> SensorMeta {
    meta.climate_zone = zones.zone_for(&meta);
    meta
}

/// Even-odd ray casting over one ring; boundary points count as inside.
pub fn point_in_polygon(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    on_ring_boundary(ring, x, y) || ring_contains(ring, x, y)
}

fn ring_contains(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) {
            let cross = xj + (y - yj) * (xi - xj) / (yi - yj);
            if x < cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_ring_boundary(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = ring.len();
    (0..n).any(|i| {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
        let scale = (x2 - x1).abs().max((y2 - y1).abs()).max(1.0);
        cross.abs() <= 1e-12 * scale * scale
            && x >= x1.min(x2)
            && x <= x1.max(x2)
            && y >= y1.min(y2)
            && y <= y1.max(y2)
    })
}

fn parse_polygon(v: &Value, feature: usize) -> Result<Polygon> {
    let bad = || Error::Malformed(format!("feature {feature}: malformed polygon coordinates"));
    let rings = v
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|pt| {
                    let pt = pt.as_array().ok_or_else(bad)?;
                    match (pt.first().and_then(Value::as_f64), pt.get(1).and_then(Value::as_f64)) {
                        (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok((x, y)),
                        _ => Err(bad()),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rings.is_empty() || rings.iter().any(|r| r.len() < 3) {
        return Err(bad());
    }
    Ok(Polygon { rings })
}
