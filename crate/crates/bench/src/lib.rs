//! Fixture builders shared by the criterion benches.

use std::collections::BTreeMap;

use driftwatch_core::collocation::{collocate, index_reference};
use driftwatch_core::ingest::{aggregate_hourly, qc_filter, set_deploy_starts, HourlyConfig, HourlyRecord, RawRecord};
use driftwatch_core::synthfleet::{generate, Injection, InjectionMode, ScenarioConfig, SynthFleet};
use driftwatch_core::{CollocationPair, CorrectionRow};

pub fn fleet(n_sensors: usize, hours: u32, seed: u64) -> SynthFleet {
    generate(&ScenarioConfig {
        n_sensors,
        hours,
        injections: vec![Injection {
            mode: InjectionMode::ChannelDivergence,
            sensors: None,
            onset_hour: 0,
            end_hour: None,
            magnitude: 1.0,
            fraction: 0.1,
        }],
        seed,
        ..Default::default()
    })
    .expect("bench scenario is valid")
}

pub struct Prepared {
    pub raw: Vec<RawRecord>,
    pub hourly: Vec<HourlyRecord>,
    pub pairs: Vec<CollocationPair>,
}

pub fn prepare(n_sensors: usize, hours: u32, seed: u64) -> Prepared {
    let f = fleet(n_sensors, hours, seed);
    let raw = f.raw.clone();
    let (kept, _) = qc_filter(f.raw);
    let mut sensors = f.sensors;
    set_deploy_starts(&mut sensors, &kept);
    let hourly = aggregate_hourly(&kept, &HourlyConfig::default());
    let mut by_sensor: BTreeMap<String, Vec<HourlyRecord>> = BTreeMap::new();
    for h in &hourly {
        by_sensor.entry(h.sensor_id.clone()).or_default().push(h.clone());
    }
    let pairs = collocate(&sensors, &f.monitors, &by_sensor, &index_reference(f.reference), 50.0);
    Prepared { raw, hourly, pairs }
}

pub fn correction_rows(pairs: &[CollocationPair]) -> Vec<CorrectionRow> {
    pairs.iter().flat_map(|p| p.rows.iter().map(CorrectionRow::from)).collect()
}

/// Deterministic pseudo-random flag sequence with rate near `p`.
pub fn flag_sequence(n: usize, p: f64) -> Vec<bool> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64) < p
        })
        .collect()
}
