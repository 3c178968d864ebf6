//! Sensor/reference-monitor matching and hourly merges.

mod methods;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ingest::{HourlyRecord, Location, SensorMeta};

pub use methods::is_light_scattering;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_RADIUS_M: f64 = 50.0;

/// One monitor: a site running one method. A mid-period method change at a
/// site yields two monitors with distinct `monitor_id`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSite {
    pub site_id: String,
    #[serde(rename = "lat", alias = "latitude")]
    pub latitude: f64,
    #[serde(rename = "lon", alias = "longitude")]
    pub longitude: f64,
    pub method_code: String,
}

impl MonitorSite {
    pub fn monitor_id(&self) -> String {
        monitor_id(&self.site_id, &self.method_code)
    }

    pub fn light_scattering(&self) -> bool {
        is_light_scattering(&self.method_code)
    }
}

pub fn monitor_id(site_id: &str, method_code: &str) -> String {
    format!("{site_id}:{method_code}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub site_id: String,
    pub monitor_id: String,
    pub hour: DateTime<Utc>,
    /// Verbatim from the source; may be missing or negative before merging.
    pub pm25_ref: Option<f64>,
    pub method_code: String,
    pub light_scattering: bool,
}

impl ReferenceRecord {
    pub fn new(site_id: &str, hour: DateTime<Utc>, pm25_ref: Option<f64>, method_code: &str) -> Self {
        ReferenceRecord {
            site_id: site_id.to_string(),
            monitor_id: monitor_id(site_id, method_code),
            hour,
            pm25_ref,
            method_code: method_code.to_string(),
            light_scattering: is_light_scattering(method_code),
        }
    }

    fn valid_value(&self) -> Option<f64> {
        self.pm25_ref.filter(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sensor_id: String,
    pub monitor_id: String,
    pub site_id: String,
    pub distance_m: f64,
    pub light_scattering: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub sensor_id: String,
    pub monitor_id: String,
    pub hour: DateTime<Utc>,
    pub pm25_cf1_mean: f64,
    pub pm25_cf1_a: f64,
    pub pm25_cf1_b: f64,
    pub rh_mean: f64,
    pub temp_mean: f64,
    pub pm25_ref: f64,
    pub light_scattering: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationPair {
    pub sensor_id: String,
    pub monitor_id: String,
    pub distance_m: f64,
    pub rows: Vec<MergedRow>,
    /// Joined hours dropped because the reference was missing or negative.
    pub dropped_reference: usize,
    /// Joined hours dropped because the sensor hour lacked channel B.
    pub dropped_single_channel: usize,
}

/// Great-circle distance in metres between two `(lat, lon)` points in degrees.
pub fn haversine_distance(p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (lat1, lon1) = (p1.0.to_radians(), p1.1.to_radians());
    let (lat2, lon2) = (p2.0.to_radians(), p2.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// All outdoor-sensor/monitor pairs within `radius_m`, ordered by sensor then
/// preference.
pub fn match_sensors(sensors: &[SensorMeta], monitors: &[MonitorSite], radius_m: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    for s in sensors.iter().filter(|s| s.location == Location::Outside) {
        let start = out.len();
        for m in monitors {
            let d = haversine_distance((s.latitude, s.longitude), (m.latitude, m.longitude));
            if d <= radius_m {
                out.push(Candidate {
                    sensor_id: s.sensor_id.clone(),
                    monitor_id: m.monitor_id(),
                    site_id: m.site_id.clone(),
                    distance_m: d,
                    light_scattering: m.light_scattering(),
                });
            }
        }
        out[start..].sort_by(preference);
        out.dedup_by(|a, b| a.sensor_id == b.sensor_id && a.monitor_id == b.monitor_id);
    }
    out
}

fn preference(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.light_scattering
        .cmp(&b.light_scattering)
        .then(a.distance_m.total_cmp(&b.distance_m))
        .then_with(|| a.monitor_id.cmp(&b.monitor_id))
}

/// Non-light-scattering first, then nearest, then lexicographic monitor id.
pub fn select_reference_monitor(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().min_by(|a, b| preference(a, b))
}

/// Inner join on hour, keeping rows with a valid (present, ≥ 0) reference
/// and both sensor channels.
pub fn merge_pairs(pair: &Candidate, sensor: &[HourlyRecord], reference: &[ReferenceRecord]) -> CollocationPair {
    let by_hour: BTreeMap<DateTime<Utc>, &ReferenceRecord> = reference
        .iter()
        .filter(|r| r.monitor_id == pair.monitor_id)
        .map(|r| (r.hour, r))
        .collect();
    let mut out = CollocationPair {
        sensor_id: pair.sensor_id.clone(),
        monitor_id: pair.monitor_id.clone(),
        distance_m: pair.distance_m,
        rows: Vec::new(),
        dropped_reference: 0,
        dropped_single_channel: 0,
    };
    for h in sensor.iter().filter(|h| h.sensor_id == pair.sensor_id) {
        let Some(r) = by_hour.get(&h.hour) else { continue };
        let Some(ref_value) = r.valid_value() else {
            out.dropped_reference += 1;
            continue;
        };
        let Some(b) = h.pm25_cf1_b else {
            out.dropped_single_channel += 1;
            continue;
        };
        out.rows.push(MergedRow {
            sensor_id: h.sensor_id.clone(),
            monitor_id: pair.monitor_id.clone(),
            hour: h.hour,
            pm25_cf1_mean: h.pm25_cf1_mean,
            pm25_cf1_a: h.pm25_cf1_a,
            pm25_cf1_b: b,
            rh_mean: h.rh_mean,
            temp_mean: h.temp_mean,
            pm25_ref: ref_value,
            light_scattering: r.light_scattering,
        });
    }
    out.rows.sort_by_key(|r| r.hour);
    out
}

/// Collocates every outdoor sensor with its preferred monitor.
///
/// Hours the chosen monitor lacks are filled from other monitors at the same
/// site (a method change) in preference order, so one sensor can yield
/// several pairs covering disjoint hours. The chosen monitor's pair is always
/// emitted, possibly empty; fill pairs are emitted only when non-empty.
pub fn collocate(
    sensors: &[SensorMeta],
    monitors: &[MonitorSite],
    hourly: &BTreeMap<String, Vec<HourlyRecord>>,
    reference: &BTreeMap<String, Vec<ReferenceRecord>>,
    radius_m: f64,
) -> Vec<CollocationPair> {
    let candidates = match_sensors(sensors, monitors, radius_m);
    let mut by_sensor: BTreeMap<&str, Vec<&Candidate>> = BTreeMap::new();
    for c in &candidates {
        by_sensor.entry(c.sensor_id.as_str()).or_default().push(c);
    }
    let empty: Vec<HourlyRecord> = Vec::new();
    let no_ref: Vec<ReferenceRecord> = Vec::new();
    let mut out = Vec::new();
    for (sensor_id, cands) in by_sensor {
        let chosen = cands[0];
        let series = hourly.get(sensor_id).unwrap_or(&empty);
        let mut covered: BTreeSet<DateTime<Utc>> = BTreeSet::new();
        let same_site = cands.iter().filter(|c| c.site_id == chosen.site_id);
        for (rank, cand) in same_site.enumerate() {
            let refs = reference.get(&cand.monitor_id).unwrap_or(&no_ref);
            let mut pair = merge_pairs(cand, series, refs);
            pair.rows.retain(|r| !covered.contains(&r.hour));
            covered.extend(pair.rows.iter().map(|r| r.hour));
            if rank == 0 || !pair.rows.is_empty() {
                out.push(pair);
            }
        }
    }
    out
}

/// Groups reference records by monitor id.
pub fn index_reference(records: Vec<ReferenceRecord>) -> BTreeMap<String, Vec<ReferenceRecord>> {
    let mut out: BTreeMap<String, Vec<ReferenceRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.monitor_id.clone()).or_default().push(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_timestamp;
    use proptest::prelude::*;

    fn cand(id: &str, d: f64, ls: bool) -> Candidate {
        Candidate {
            sensor_id: "s".into(),
            monitor_id: id.into(),
            site_id: id.split(':').next().unwrap().into(),
            distance_m: d,
            light_scattering: ls,
        }
    }

    fn hour(h: u32) -> DateTime<Utc> {
        parse_timestamp(&format!("2020-01-01T{h:02}:00:00Z")).unwrap()
    }

    fn hourly(h: u32, a: f64, b: Option<f64>) -> HourlyRecord {
        HourlyRecord {
            sensor_id: "s".into(),
            hour: hour(h),
            pm25_cf1_mean: b.map_or(a, |b| (a + b) / 2.0),
            pm25_cf1_a: a,
            pm25_cf1_b: b,
            pm25_atm_mean: None,
            rh_mean: 40.0,
            temp_mean: 20.0,
            n_subhourly: 4,
        }
    }

    #[test]
    fn haversine_equatorial_arc() {
        assert_eq!(haversine_distance((10.0, 20.0), (10.0, 20.0)), 0.0);
        let oracle = EARTH_RADIUS_M * 0.001_f64.to_radians();
        let d = haversine_distance((0.0, 0.0), (0.0, 0.001));
        assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
        assert!((d - 111.19).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn haversine_symmetric(a in -89.0..89.0f64, b in -179.0..179.0f64, c in -89.0..89.0f64, d in -179.0..179.0f64) {
            let x = haversine_distance((a, b), (c, d));
            let y = haversine_distance((c, d), (a, b));
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }

        #[test]
        fn selection_is_order_independent(mut idx in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
            let pool = [
                cand("a:170", 40.0, false), cand("b:236", 10.0, true), cand("c:170", 20.0, false),
                cand("d:209", 20.0, false), cand("e:238", 5.0, true), cand("f:195", 1.0, true),
            ];
            let shuffled: Vec<Candidate> = idx.drain(..).map(|i| pool[i].clone()).collect();
            prop_assert_eq!(&select_reference_monitor(&shuffled).unwrap().monitor_id, "c:170");
        }
    }

    #[test]
    fn selection_preferences() {
        let c = [cand("bam:170", 40.0, false), cand("t640:236", 10.0, true)];
        assert_eq!(select_reference_monitor(&c).unwrap().monitor_id, "bam:170");
        let c = [cand("x:170", 40.0, false), cand("y:170", 20.0, false)];
        assert_eq!(select_reference_monitor(&c).unwrap().monitor_id, "y:170");
        let c = [cand("x:170", 40.0, false)];
        assert_eq!(select_reference_monitor(&c).unwrap().monitor_id, "x:170");
        assert!(select_reference_monitor(&[]).is_none());
    }

    #[test]
    fn match_radius_and_indoor_exclusion() {
        let dlat = |m: f64| (m / EARTH_RADIUS_M).to_degrees();
        let mut sensors = vec![SensorMeta {
            sensor_id: "s".into(),
            latitude: 40.0,
            longitude: -100.0,
            location: Location::Outside,
            deploy_start: None,
            climate_zone: Default::default(),
        }];
        let site = |id: &str, m: f64| MonitorSite {
            site_id: id.into(),
            latitude: 40.0 + dlat(m),
            longitude: -100.0,
            method_code: "170".into(),
        };
        let monitors = vec![site("near", 30.0), site("far", 51.0), site("mid", 45.0)];
        let m = match_sensors(&sensors, &monitors, DEFAULT_RADIUS_M);
        assert_eq!(m.iter().map(|c| c.site_id.as_str()).collect::<Vec<_>>(), ["near", "mid"]);
        sensors[0].location = Location::Inside;
        assert!(match_sensors(&sensors, &monitors, DEFAULT_RADIUS_M).is_empty());
    }

    #[test]
    fn merge_drops_negative_and_missing_reference() {
        let c = cand("site:170", 10.0, false);
        let sensor: Vec<_> = (0..5).map(|h| hourly(h, 10.0, Some(12.0))).collect();
        let refs = vec![
            ReferenceRecord::new("site", hour(0), Some(-1.0), "170"),
            ReferenceRecord::new("site", hour(1), Some(0.0), "170"),
            ReferenceRecord::new("site", hour(2), None, "170"),
            ReferenceRecord::new("site", hour(3), Some(8.0), "170"),
            ReferenceRecord::new("site", hour(9), Some(8.0), "170"),
        ];
        let p = merge_pairs(&c, &sensor, &refs);
        assert_eq!(p.rows.iter().map(|r| r.pm25_ref).collect::<Vec<_>>(), [0.0, 8.0]);
        assert_eq!(p.dropped_reference, 2);
        assert!(p.rows.len() <= sensor.len().min(refs.len()));

        let disjoint = vec![ReferenceRecord::new("site", hour(20), Some(5.0), "170")];
        assert!(merge_pairs(&c, &sensor, &disjoint).rows.is_empty());

        let single = vec![hourly(3, 10.0, None)];
        let p = merge_pairs(&c, &single, &refs);
        assert!(p.rows.is_empty());
        assert_eq!(p.dropped_single_channel, 1);
    }

    #[test]
    fn method_change_is_joined_piecewise() {
        let sensors = vec![SensorMeta {
            sensor_id: "s".into(),
            latitude: 40.0,
            longitude: -100.0,
            location: Location::Outside,
            deploy_start: None,
            climate_zone: Default::default(),
        }];
        let monitors: Vec<MonitorSite> = ["170", "236"]
            .iter()
            .map(|code| MonitorSite {
                site_id: "site".into(),
                latitude: 40.0,
                longitude: -100.0,
                method_code: code.to_string(),
            })
            .collect();
        let mut hourly_map = BTreeMap::new();
        hourly_map.insert("s".to_string(), (0..6).map(|h| hourly(h, 10.0, Some(11.0))).collect());
        let mut refs = Vec::new();
        for h in 0..3 {
            refs.push(ReferenceRecord::new("site", hour(h), Some(9.0), "170"));
        }
        for h in 2..6 {
            refs.push(ReferenceRecord::new("site", hour(h), Some(9.5), "236"));
        }
        let pairs = collocate(&sensors, &monitors, &hourly_map, &index_reference(refs), DEFAULT_RADIUS_M);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].monitor_id, "site:170");
        assert_eq!(pairs[0].rows.len(), 3);
        assert_eq!(pairs[1].monitor_id, "site:236");
        assert_eq!(pairs[1].rows.len(), 3);
        assert!(pairs[1].rows.iter().all(|r| r.light_scattering));
    }
}
