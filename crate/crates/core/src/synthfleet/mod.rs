//! Seeded synthetic dual-channel fleet with ground-truth degradation labels.
//!
//! The latent sensor signal is a lognormal AR(1) process. The co-located
//! reference is that signal passed through the planted correction
//! (`ref = b0 + b_pm·PM + b_rh·RH + b_t·T + noise`), so the sensor is the
//! inverse-corrected truth. Channels A and B carry independent relative
//! noise and the configured degradations.

mod labels;

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::{MonitorSite, ReferenceRecord};
use crate::ingest::{ClimateZone, Location, RawRecord, SensorMeta};
use crate::schema;
use crate::time::parse_timestamp;
use crate::{Error, Result, HOURS_PER_YEAR};

pub use labels::{FleetLabels, InjectionLabel, SensorLabels, LABELS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// Channel B on affected hours becomes `B·(1 + m) + 10·m`.
    ChannelDivergence,
    /// Channel B reads 0 from the onset hour on.
    ChannelDeath,
    /// Both channels scale by `1 + m·(op_hour − onset)/8760` after onset.
    DriftSlope,
    /// Channel B gains extra relative noise with sd `m` before the onset hour.
    BurnInNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub mode: InjectionMode,
    /// Sensor indices; `None` applies to every sensor.
    #[serde(default)]
    pub sensors: Option<Vec<usize>>,
    #[serde(default)]
    pub onset_hour: u32,
    /// Last affected op hour (exclusive); `None` runs to the end.
    #[serde(default)]
    pub end_hour: Option<u32>,
    pub magnitude: f64,
    /// Share of eligible hours affected, drawn as an exact count without
    /// replacement. Ignored by `channel_death` and `drift_slope`.
    #[serde(default = "one")]
    pub fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmProcess {
    pub median: f64,
    pub log_sd: f64,
    pub ar1: f64,
}

impl Default for PmProcess {
    fn default() -> Self {
        PmProcess {
            median: 12.0,
            log_sd: 0.5,
            ar1: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diurnal {
    pub mean: f64,
    pub amplitude: f64,
    /// Hour of day (UTC) of the daily maximum.
    pub peak_hour: f64,
    pub noise_sd: f64,
}

impl Diurnal {
    fn at(&self, hour_of_day: f64, z: f64) -> f64 {
        self.mean + self.amplitude * (2.0 * PI * (hour_of_day - self.peak_hour) / 24.0).cos() + self.noise_sd * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedCorrection {
    pub intercept: f64,
    pub pm: f64,
    pub rh: f64,
    pub temp: f64,
    pub noise_sd: f64,
}

impl Default for PlantedCorrection {
    fn default() -> Self {
        PlantedCorrection {
            intercept: 5.92,
            pm: 0.57,
            rh: -0.091,
            temp: 0.0,
            noise_sd: 1.0,
        }
    }
}

/// Bernoulli divergence whose hourly probability rises linearly with
/// operational time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagRateProcess {
    pub base: f64,
    pub slope_per_year: f64,
    #[serde(default = "default_divergence")]
    pub magnitude: f64,
}

fn default_divergence() -> f64 {
    2.0
}

impl FlagRateProcess {
    pub fn probability(&self, op_hour: u32) -> f64 {
        (self.base + self.slope_per_year * op_hour as f64 / HOURS_PER_YEAR).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_sensors: usize,
    pub hours: u32,
    pub start: String,
    /// Hours between consecutive sensors' deployments.
    pub deploy_stagger_hours: u32,
    pub pm: PmProcess,
    /// Relative sd of each channel's independent noise.
    pub channel_noise_sd: f64,
    pub rh: Diurnal,
    pub temp: Diurnal,
    pub correction: PlantedCorrection,
    pub flag_rate: Option<FlagRateProcess>,
    pub injections: Vec<Injection>,
    /// Probability each 15-minute record is absent.
    pub subhourly_missing: f64,
    /// Probability each reference hour is missing.
    pub reference_missing: f64,
    /// Sensors placed indoors: every `k`-th sensor when set.
    pub indoor_every: Option<usize>,
    pub zones: Vec<ClimateZone>,
    /// Metres between each sensor and its monitor.
    pub monitor_offset_m: f64,
    pub method_code: String,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_sensors: 20,
            hours: 2000,
            start: "2019-01-01T00:00:00Z".into(),
            deploy_stagger_hours: 0,
            pm: PmProcess::default(),
            channel_noise_sd: 0.01,
            rh: Diurnal {
                mean: 55.0,
                amplitude: 15.0,
                peak_hour: 11.0,
                noise_sd: 5.0,
            },
            temp: Diurnal {
                mean: 18.0,
                amplitude: 6.0,
                peak_hour: 22.0,
                noise_sd: 2.0,
            },
            correction: PlantedCorrection::default(),
            flag_rate: None,
            injections: Vec::new(),
            subhourly_missing: 0.0,
            reference_missing: 0.0,
            indoor_every: None,
            zones: ClimateZone::ALL.iter().copied().filter(|z| *z != ClimateZone::Unknown).collect(),
            monitor_offset_m: 10.0,
            method_code: "170".into(),
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ScenarioConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_sensors == 0 || self.hours == 0 {
            return bad("scenario needs at least one sensor and one hour".into());
        }
        let finite = [
            self.pm.median,
            self.pm.log_sd,
            self.pm.ar1,
            self.channel_noise_sd,
            self.rh.mean,
            self.rh.amplitude,
            self.rh.noise_sd,
            self.temp.mean,
            self.temp.amplitude,
            self.temp.noise_sd,
            self.correction.intercept,
            self.correction.pm,
            self.correction.rh,
            self.correction.temp,
            self.correction.noise_sd,
            self.monitor_offset_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.injections.iter().any(|i| !i.magnitude.is_finite()) {
            return bad("scenario magnitudes must be finite".into());
        }
        if !(self.pm.median > 0.0) || !(0.0..1.0).contains(&self.pm.ar1) || self.pm.log_sd < 0.0 {
            return bad("pm process needs median > 0, 0 <= ar1 < 1, log_sd >= 0".into());
        }
        for p in [self.subhourly_missing, self.reference_missing] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        for inj in &self.injections {
            if !(0.0..=1.0).contains(&inj.fraction) {
                return bad(format!("injection fraction {} outside [0, 1]", inj.fraction));
            }
            if let Some(ids) = &inj.sensors {
                if let Some(i) = ids.iter().find(|i| **i >= self.n_sensors) {
                    return bad(format!("injection targets sensor index {i} of {}", self.n_sensors));
                }
            }
        }
        parse_timestamp(&self.start)?;
        Ok(())
    }

    pub fn sensor_id(&self, index: usize) -> String {
        format!("synth-{index:04}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFleet {
    pub raw: Vec<RawRecord>,
    pub sensors: Vec<SensorMeta>,
    pub monitors: Vec<MonitorSite>,
    pub reference: Vec<ReferenceRecord>,
    pub labels: FleetLabels,
}

struct SensorOutput {
    raw: Vec<RawRecord>,
    meta: SensorMeta,
    monitor: MonitorSite,
    reference: Vec<ReferenceRecord>,
    labels: SensorLabels,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn atm_from_cf1(x: f64) -> f64 {
    if x <= 25.0 {
        x
    } else {
        25.0 + (x - 25.0) * 2.0 / 3.0
    }
}

fn eligible_window(inj: &Injection, hours: u32) -> (u32, u32) {
    match inj.mode {
        InjectionMode::BurnInNoise => (0, inj.onset_hour.min(hours)),
        _ => (inj.onset_hour.min(hours), inj.end_hour.unwrap_or(hours).min(hours)),
    }
}

fn generate_sensor(config: &ScenarioConfig, index: usize, start: DateTime<Utc>) -> SensorOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);
    let sensor_id = config.sensor_id(index);
    let hours = config.hours as usize;
    let deploy = start + TimeDelta::hours(index as i64 * config.deploy_stagger_hours as i64);

    // Per-hour degradation state.
    let mut divergence = vec![0.0f64; hours];
    let mut dead = vec![false; hours];
    let mut drift = vec![1.0f64; hours];
    let mut extra_noise = vec![0.0f64; hours];
    let mut injection_labels = Vec::new();

    for (k, inj) in config.injections.iter().enumerate() {
        if inj.sensors.as_ref().is_some_and(|s| !s.contains(&index)) {
            continue;
        }
        let (lo, hi) = eligible_window(inj, config.hours);
        let span = (hi.saturating_sub(lo)) as usize;
        let affected: Vec<u32> = match inj.mode {
            InjectionMode::ChannelDeath | InjectionMode::DriftSlope => (lo..hi).collect(),
            _ => {
                let count = (inj.fraction * span as f64).round() as usize;
                let mut picked: Vec<u32> = sample(&mut rng, span, count.min(span))
                    .into_iter()
                    .map(|i| lo + i as u32)
                    .collect();
                picked.sort_unstable();
                picked
            }
        };
        for &h in &affected {
            let h = h as usize;
            match inj.mode {
                InjectionMode::ChannelDivergence => divergence[h] = divergence[h].max(inj.magnitude),
                InjectionMode::ChannelDeath => dead[h] = true,
                InjectionMode::DriftSlope => {
                    drift[h] *= 1.0 + inj.magnitude * (h as f64 - inj.onset_hour as f64) / HOURS_PER_YEAR
                }
                InjectionMode::BurnInNoise => extra_noise[h] = extra_noise[h].max(inj.magnitude),
            }
        }
        injection_labels.push(InjectionLabel {
            injection: k,
            mode: inj.mode,
            onset_hour: inj.onset_hour,
            magnitude: inj.magnitude,
            hours: affected,
        });
    }
    if let Some(fr) = &config.flag_rate {
        let mut affected = Vec::new();
        for (h, d) in divergence.iter_mut().enumerate() {
            if rng.random::<f64>() < fr.probability(h as u32) {
                *d = d.max(fr.magnitude);
                affected.push(h as u32);
            }
        }
        injection_labels.push(InjectionLabel {
            injection: config.injections.len(),
            mode: InjectionMode::ChannelDivergence,
            onset_hour: 0,
            magnitude: fr.magnitude,
            hours: affected,
        });
    }

    let pm = &config.pm;
    let mu = pm.median.ln();
    let innovation_sd = pm.log_sd * (1.0 - pm.ar1 * pm.ar1).sqrt();
    let mut log_pm = mu + pm.log_sd * normal(&mut rng);
    let sigma = config.channel_noise_sd;
    let c = &config.correction;
    let site_id = format!("site-{index:04}");

    let mut raw = Vec::with_capacity(hours * 4);
    let mut reference = Vec::with_capacity(hours);
    for h in 0..hours {
        if h > 0 {
            log_pm = mu + pm.ar1 * (log_pm - mu) + innovation_sd * normal(&mut rng);
        }
        let hour = deploy + TimeDelta::hours(h as i64);
        let hod = hour.format("%H").to_string().parse::<f64>().expect("hour of day");
        let rh = config.rh.at(hod, normal(&mut rng)).clamp(5.0, 95.0);
        let temp = config.temp.at(hod, normal(&mut rng));
        let signal = log_pm.exp();
        let value = c.intercept + c.pm * signal + c.rh * rh + c.temp * temp + c.noise_sd * normal(&mut rng);
        let missing_ref = rng.random::<f64>() < config.reference_missing;
        reference.push(ReferenceRecord::new(
            &site_id,
            hour,
            (!missing_ref).then_some(value),
            &config.method_code,
        ));

        let sensor_pm = signal * drift[h];
        for q in 0..4 {
            let ea = normal(&mut rng);
            let eb = normal(&mut rng);
            let ex = normal(&mut rng);
            if config.subhourly_missing > 0.0 && rng.random::<f64>() < config.subhourly_missing {
                continue;
            }
            let a = (sensor_pm * (1.0 + sigma * ea)).max(0.0);
            let mut b = (sensor_pm * (1.0 + sigma * eb + extra_noise[h] * ex)).max(0.0);
            if divergence[h] > 0.0 {
                b = b * (1.0 + divergence[h]) + 10.0 * divergence[h];
            }
            if dead[h] {
                b = 0.0;
            }
            raw.push(RawRecord {
                sensor_id: sensor_id.clone(),
                timestamp: hour + TimeDelta::minutes(15 * q),
                pm25_cf1_a: Some(a),
                pm25_cf1_b: Some(b),
                pm25_atm_a: Some(atm_from_cf1(a)),
                pm25_atm_b: Some(atm_from_cf1(b)),
                rh: Some(rh),
                temp: Some(temp),
            });
        }
    }

    // About 1 km from the origin per index, so only the intended monitor is in range.
    let lat = 30.0 + index as f64 * 0.01;
    let lon = -100.0;
    let dlat = config.monitor_offset_m / crate::collocation::EARTH_RADIUS_M * 180.0 / PI;
    let location = match config.indoor_every {
        Some(k) if k > 0 && index % k == k - 1 => Location::Inside,
        _ => Location::Outside,
    };
    let zone = if config.zones.is_empty() {
        ClimateZone::Unknown
    } else {
        config.zones[index % config.zones.len()]
    };
    let labels = SensorLabels::new(&sensor_id, config.hours, injection_labels);
    SensorOutput {
        meta: SensorMeta {
            sensor_id,
            latitude: lat,
            longitude: lon,
            location,
            deploy_start: raw.first().map(|r| r.timestamp),
            climate_zone: zone,
        },
        monitor: MonitorSite {
            site_id,
            latitude: lat + dlat,
            longitude: lon,
            method_code: config.method_code.clone(),
        },
        raw,
        reference,
        labels,
    }
}

/// Generates the fleet; per-sensor work runs in parallel on independent
/// RNG streams, so output is identical for any thread count.
pub fn generate(config: &ScenarioConfig) -> Result<SynthFleet> {
    config.validate()?;
    let start = parse_timestamp(&config.start)?;
    let outputs: Vec<SensorOutput> = (0..config.n_sensors)
        .into_par_iter()
        .map(|i| generate_sensor(config, i, start))
        .collect();
    let mut fleet = SynthFleet {
        raw: Vec::new(),
        sensors: Vec::new(),
        monitors: Vec::new(),
        reference: Vec::new(),
        labels: FleetLabels {
            seed: config.seed,
            sensors: Default::default(),
        },
    };
    for out in outputs {
        fleet.raw.extend(out.raw);
        fleet.sensors.push(out.meta);
        fleet.monitors.push(out.monitor);
        fleet.reference.extend(out.reference);
        fleet.labels.sensors.insert(out.labels.sensor_id.clone(), out.labels);
    }
    Ok(fleet)
}

/// Writes the fleet in the ingest schemas plus `labels.json`.
pub fn write_fleet(dir: &Path, fleet: &SynthFleet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    schema::write_raw(&dir.join(schema::RAW_FILE), &fleet.raw)?;
    crate::ingest::write_sensor_meta(&dir.join(schema::SENSORS_FILE), &fleet.sensors)?;
    schema::write_monitors(&dir.join(schema::MONITORS_FILE), &fleet.monitors)?;
    schema::write_reference(&dir.join(schema::REFERENCE_FILE), &fleet.reference)?;
    fleet.labels.write(&dir.join(LABELS_FILE))
}

/// Hourly flag indicators drawn straight from a [`FlagRateProcess`], without
/// synthesizing raw channels; `(op_hour, flag)` per sensor.
pub fn bernoulli_flag_series(process: &FlagRateProcess, n_sensors: usize, hours: u32, seed: u64) -> Vec<Vec<(i64, bool)>> {
    (0..n_sensors)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            (0..hours)
                .map(|h| (h as i64, rng.random::<f64>() < process.probability(h)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{aggregate_hourly, qc_filter, HourlyConfig};

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_sensors: 3,
            hours: 300,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&ScenarioConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.raw, c.raw);
        assert_eq!(a.raw.len(), 3 * 300 * 4);
        assert_eq!(a.reference.len(), 900);
    }

    #[test]
    fn clean_noise_free_fleet_has_identical_channels_and_passes_qc() {
        let fleet = generate(&ScenarioConfig {
            channel_noise_sd: 0.0,
            ..small()
        })
        .unwrap();
        assert!(fleet.raw.iter().all(|r| r.pm25_cf1_a == r.pm25_cf1_b));
        let n = fleet.raw.len();
        let (kept, report) = qc_filter(fleet.raw);
        assert_eq!(kept.len(), n);
        assert_eq!(report.retained as usize, n);
        let hourly = aggregate_hourly(&kept, &HourlyConfig::default());
        assert_eq!(hourly.len(), 900);
        assert!(fleet.labels.sensors.values().all(|l| !l.permanently_degraded));
    }

    #[test]
    fn divergence_hits_exact_count_and_is_labelled() {
        let cfg = ScenarioConfig {
            injections: vec![Injection {
                mode: InjectionMode::ChannelDivergence,
                sensors: Some(vec![1]),
                onset_hour: 100,
                end_hour: None,
                magnitude: 2.0,
                fraction: 0.1,
            }],
            ..small()
        };
        let fleet = generate(&cfg).unwrap();
        let labels = &fleet.labels.sensors["synth-0001"];
        assert_eq!(labels.injections[0].hours.len(), 20);
        assert!(labels.injections[0].hours.iter().all(|h| *h >= 100));
        assert!(fleet.labels.sensors["synth-0000"].injections.is_empty());
        let hourly = aggregate_hourly(&fleet.raw, &HourlyConfig::default());
        let wide = hourly
            .iter()
            .filter(|h| h.sensor_id == "synth-0001")
            .filter(|h| h.pm25_cf1_b.unwrap() > 2.5 * h.pm25_cf1_a)
            .count();
        assert_eq!(wide, 20);
    }

    #[test]
    fn death_zeroes_channel_b_and_is_degraded_by_construction() {
        let cfg = ScenarioConfig {
            injections: vec![Injection {
                mode: InjectionMode::ChannelDeath,
                sensors: Some(vec![0]),
                onset_hour: 150,
                end_hour: None,
                magnitude: 0.0,
                fraction: 1.0,
            }],
            ..small()
        };
        let fleet = generate(&cfg).unwrap();
        let t150 = fleet.sensors[0].deploy_start.unwrap() + TimeDelta::hours(150);
        assert!(fleet
            .raw
            .iter()
            .filter(|r| r.sensor_id == "synth-0000")
            .all(|r| (r.pm25_cf1_b == Some(0.0)) == (r.timestamp >= t150)));
        assert!(fleet.labels.sensors["synth-0000"].permanently_degraded);
        assert!(!fleet.labels.sensors["synth-0001"].permanently_degraded);
    }

    #[test]
    fn monitor_sits_inside_radius_of_its_sensor_only() {
        let fleet = generate(&small()).unwrap();
        for (i, s) in fleet.sensors.iter().enumerate() {
            for (j, m) in fleet.monitors.iter().enumerate() {
                let d = crate::collocation::haversine_distance((s.latitude, s.longitude), (m.latitude, m.longitude));
                assert_eq!(d <= 50.0, i == j, "{i} {j} {d}");
            }
        }
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"n_sensors": 4, "injections": [{"mode": "channel_death", "magnitude": 0}]}"#).unwrap();
        assert_eq!(cfg.n_sensors, 4);
        assert_eq!(cfg.hours, 2000);
        assert_eq!(cfg.injections[0].fraction, 1.0);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"n_sensor": 4}"#).is_err());
        let bad = ScenarioConfig {
            injections: vec![Injection {
                mode: InjectionMode::ChannelDivergence,
                sensors: Some(vec![9]),
                onset_hour: 0,
                end_hour: None,
                magnitude: 1.0,
                fraction: 0.5,
            }],
            ..small()
        };
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn bernoulli_series_follows_rate() {
        let p = FlagRateProcess {
            base: 0.02,
            slope_per_year: 0.0,
            magnitude: 2.0,
        };
        let s = bernoulli_flag_series(&p, 10, 5000, 3);
        let rate = s.iter().flatten().filter(|(_, f)| *f).count() as f64 / 50_000.0;
        assert!((rate - 0.02).abs() < 0.004, "{rate}");
        assert_eq!(s, bernoulli_flag_series(&p, 10, 5000, 3));
    }
}
