//! Stage functions shared by the individual subcommands and `report`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use driftwatch_core::collocation::{collocate, index_reference};
use driftwatch_core::correction::{correction_error, fit_correction, CorrectionModelSpec};
use driftwatch_core::degradation::{
    build_profiles, cumulative_exceedances, deploy_starts, flag_rate_by_op_hour, op_hour_series, DegradationPolicy,
    SENSITIVITY_THRESHOLDS,
};
use driftwatch_core::flagging::apply_flags;
use driftwatch_core::ingest::{
    aggregate_hourly, assign_climate_zone, qc_filter_with, read_raw_path, read_sensor_meta, set_deploy_starts,
    HourlyConfig, ParseDiagnostics, QcBounds, RawSchema, ZoneLookup,
};
use driftwatch_core::time::hours_between;
use driftwatch_core::trend::{
    fit_pspline_gam, interaction_trend, linear_trend, stratified_trends, BootstrapConfig, GamConfig, InteractionRow,
    Outcome, StratifiedTrends, TrendOptions, TrendPoint,
};
use driftwatch_core::{
    CollocationPair, CorrectionRow, DegradationProfile, FittedCorrection, FlagRule, FlaggedRecord, GamFit, HourlyRecord,
    Location, MonitorSite, QcReport, ReferenceRecord, SensorMeta,
};
use serde::{Deserialize, Serialize};

pub struct Ingested {
    pub hourly: Vec<HourlyRecord>,
    pub sensors: Vec<SensorMeta>,
    pub parse: ParseDiagnostics,
    pub qc: QcReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub parse: ParseDiagnostics,
    pub qc: QcReport,
    pub hourly_records: usize,
    pub sensors: usize,
}

impl Ingested {
    pub fn report(&self) -> IngestReport {
        IngestReport {
            parse: self.parse.clone(),
            qc: self.qc,
            hourly_records: self.hourly.len(),
            sensors: self.sensors.len(),
        }
    }
}

pub fn ingest(
    raw: &Path,
    sensors: &Path,
    zones: Option<&Path>,
    schema: &RawSchema,
    bounds: &QcBounds,
    hourly: &HourlyConfig,
) -> Result<Ingested> {
    let (records, parse) = read_raw_path(raw, schema)?;
    let (kept, qc) = qc_filter_with(records, bounds);
    let mut meta = read_sensor_meta(sensors)?;
    set_deploy_starts(&mut meta, &kept);
    if let Some(z) = zones {
        let lookup = ZoneLookup::from_path(z)?;
        meta = meta.into_iter().map(|m| assign_climate_zone(m, &lookup)).collect();
    }
    let hourly = aggregate_hourly(&kept, hourly);
    log::info!(
        "ingest: {} raw rows, {} retained after QC, {} hourly records",
        parse.rows_parsed,
        qc.retained,
        hourly.len()
    );
    Ok(Ingested {
        hourly,
        sensors: meta,
        parse,
        qc,
    })
}

pub fn group_by_sensor(hourly: &[HourlyRecord]) -> BTreeMap<String, Vec<HourlyRecord>> {
    let mut out: BTreeMap<String, Vec<HourlyRecord>> = BTreeMap::new();
    for h in hourly {
        out.entry(h.sensor_id.clone()).or_default().push(h.clone());
    }
    out
}

pub fn collocate_stage(
    sensors: &[SensorMeta],
    monitors: &[MonitorSite],
    hourly: &[HourlyRecord],
    reference: Vec<ReferenceRecord>,
    radius_m: f64,
) -> Vec<CollocationPair> {
    let pairs = collocate(sensors, monitors, &group_by_sensor(hourly), &index_reference(reference), radius_m);
    log::info!(
        "collocate: {} pairs, {} merged rows",
        pairs.len(),
        pairs.iter().map(|p| p.rows.len()).sum::<usize>()
    );
    pairs
}

pub fn flag_stage(hourly: Vec<HourlyRecord>, percentile: f64, abs_threshold: f64) -> Result<Vec<FlaggedRecord>> {
    let (rule, excluded) = FlagRule::from_hourly(&hourly, percentile, abs_threshold)?;
    if !excluded.is_empty() {
        log::warn!("{} sensors have no dual-channel hours and are never flagged", excluded.len());
    }
    Ok(apply_flags(hourly, &rule)?)
}

/// `(op_hour, flag)` series by sensor, plus the deploy starts used.
pub struct OpSeries {
    pub starts: BTreeMap<String, DateTime<Utc>>,
    pub flags: BTreeMap<String, Vec<(i64, bool)>>,
    /// `(op_hour, pm25_cf1_mean)` per sensor, for exposure counts.
    pub concentration: BTreeMap<String, Vec<(i64, f64)>>,
}

pub fn op_series(meta: &[SensorMeta], flagged: &[FlaggedRecord]) -> OpSeries {
    let starts = deploy_starts(meta, flagged);
    let flags = op_hour_series(flagged, &starts);
    let mut concentration: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
    for r in flagged {
        if let Some(s) = starts.get(&r.hourly.sensor_id) {
            concentration
                .entry(r.hourly.sensor_id.clone())
                .or_default()
                .push((hours_between(s, &r.hourly.hour), r.hourly.pm25_cf1_mean));
        }
    }
    for v in concentration.values_mut() {
        v.sort_by_key(|r| r.0);
        v.dedup_by_key(|r| r.0);
    }
    OpSeries {
        starts,
        flags,
        concentration,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub sensor_id: String,
    #[serde(with = "bit")]
    pub degraded: bool,
    pub qualifying_hours: usize,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub climate_zone: String,
    pub location: String,
    pub n_hours: usize,
    #[serde(rename = "degraded_0.3", with = "bit")]
    pub degraded_03: bool,
    #[serde(rename = "degraded_0.4", with = "bit")]
    pub degraded_04: bool,
    #[serde(rename = "degraded_0.5", with = "bit")]
    pub degraded_05: bool,
}

mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(D::Error::custom(format!("expected 0 or 1, got `{other}`"))),
        }
    }
}

pub fn profiles(series: &OpSeries, policy: DegradationPolicy) -> Vec<DegradationProfile> {
    build_profiles(&series.flags, policy)
}

pub fn profile_rows(profiles: &[DegradationProfile], meta: &[SensorMeta]) -> Vec<ProfileRow> {
    let by_id: BTreeMap<&str, &SensorMeta> = meta.iter().map(|m| (m.sensor_id.as_str(), m)).collect();
    profiles
        .iter()
        .map(|p| {
            let m = by_id.get(p.sensor_id.as_str());
            let at = |t: f64| p.degraded_at(t, p.policy.min_hours);
            debug_assert_eq!(SENSITIVITY_THRESHOLDS, [0.3, 0.4, 0.5]);
            ProfileRow {
                sensor_id: p.sensor_id.clone(),
                degraded: p.permanently_degraded,
                qualifying_hours: p.qualifying_hours,
                lat: m.map(|m| m.latitude),
                lon: m.map(|m| m.longitude),
                climate_zone: m.map(|m| m.climate_zone.to_string()).unwrap_or_else(|| "unknown".into()),
                location: m.map(|m| m.location.to_string()).unwrap_or_else(|| "unknown".into()),
                n_hours: p.flags.len(),
                degraded_03: at(0.3),
                degraded_04: at(0.4),
                degraded_05: at(0.5),
            }
        })
        .collect()
}

/// One unflagged collocated hour ready for correction.
#[derive(Debug, Clone, PartialEq)]
pub struct OpRow {
    pub row: CorrectionRow,
    pub op_hour: i64,
}

/// Merged rows whose sensor hour was not flagged, tagged with op_hour.
pub fn correction_inputs(
    pairs: &[CollocationPair],
    flagged: &[FlaggedRecord],
    starts: &BTreeMap<String, DateTime<Utc>>,
) -> Vec<OpRow> {
    let flagged_hours: BTreeSet<(&str, DateTime<Utc>)> = flagged
        .iter()
        .filter(|f| f.flag)
        .map(|f| (f.hourly.sensor_id.as_str(), f.hourly.hour))
        .collect();
    let mut out: Vec<OpRow> = pairs
        .iter()
        .flat_map(|p| p.rows.iter())
        .filter(|r| !flagged_hours.contains(&(r.sensor_id.as_str(), r.hour)))
        .filter_map(|r| {
            starts.get(&r.sensor_id).map(|s| OpRow {
                row: CorrectionRow::from(r),
                op_hour: hours_between(s, &r.hour),
            })
        })
        .collect();
    out.sort_by(|a, b| (&a.row.sensor_id, a.row.hour).cmp(&(&b.row.sensor_id, b.row.hour)));
    out
}

/// `errors.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub sensor_id: String,
    pub hour: DateTime<Utc>,
    pub op_hour: i64,
    pub corrected: f64,
    #[serde(rename = "ref")]
    pub reference: f64,
    pub error: f64,
    pub norm_error: Option<f64>,
}

pub fn correction_errors(fit: &FittedCorrection, rows: &[OpRow]) -> Vec<ErrorRow> {
    rows.iter()
        .filter_map(|r| {
            let c = fit.predict(&r.row)?;
            let e = correction_error(&r.row.sensor_id, r.row.hour, c, r.row.pm25_ref);
            Some(ErrorRow {
                sensor_id: e.sensor_id,
                hour: e.hour,
                op_hour: r.op_hour,
                corrected: e.corrected,
                reference: e.reference,
                error: e.error,
                norm_error: e.norm_error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratify {
    All,
    Location,
    /// Outside devices only.
    ClimateZone,
}

impl Stratify {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stratify::All => "all",
            Stratify::Location => "location",
            Stratify::ClimateZone => "climate_zone",
        }
    }

    fn label(&self, meta: Option<&SensorMeta>) -> Option<String> {
        match self {
            Stratify::All => Some("all".into()),
            Stratify::Location => Some(meta.map_or("unknown".into(), |m| m.location.to_string())),
            Stratify::ClimateZone => match meta {
                Some(m) if m.location == Location::Outside => Some(m.climate_zone.to_string()),
                _ => None,
            },
        }
    }
}

impl std::str::FromStr for Stratify {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "none" => Ok(Stratify::All),
            "location" => Ok(Stratify::Location),
            "climate_zone" => Ok(Stratify::ClimateZone),
            _ => anyhow::bail!("unknown stratification `{s}` (all, location, climate_zone)"),
        }
    }
}

/// Data a trend outcome is computed from.
pub enum OutcomeData<'a> {
    Flags(&'a BTreeMap<String, Vec<(i64, bool)>>),
    Errors(&'a [ErrorRow]),
}

/// Trend points and their stratum labels for hours at or after `burn_in`.
///
/// The flag outcome is the per-op_hour fleet percentage within each stratum
/// (weight = measurements that hour); error outcomes use one point per hour
/// and sensor, clustered by sensor.
pub fn outcome_points(
    outcome: Outcome,
    data: &OutcomeData,
    meta: &[SensorMeta],
    stratify: Stratify,
    burn_in: usize,
) -> (Vec<TrendPoint>, Vec<String>) {
    let by_id: BTreeMap<&str, &SensorMeta> = meta.iter().map(|m| (m.sensor_id.as_str(), m)).collect();
    let burn_in = burn_in as i64;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    match (outcome, data) {
        (Outcome::PctFlagged, OutcomeData::Flags(flags)) => {
            let mut groups: BTreeMap<String, Vec<Vec<(i64, bool)>>> = BTreeMap::new();
            for (id, s) in flags.iter() {
                if let Some(label) = stratify.label(by_id.get(id.as_str()).copied()) {
                    let kept: Vec<(i64, bool)> = s.iter().copied().filter(|r| r.0 >= burn_in).collect();
                    groups.entry(label).or_default().push(kept);
                }
            }
            for (label, series) in groups {
                for row in flag_rate_by_op_hour(series.iter().map(Vec::as_slice)) {
                    points.push(TrendPoint {
                        op_hour: row.op_hour as f64,
                        y: row.pct_flagged,
                        weight: row.n_measurements as f64,
                        cluster: 0,
                    });
                    labels.push(label.clone());
                }
            }
        }
        (Outcome::CorrectionError | Outcome::NormalizedError, OutcomeData::Errors(rows)) => {
            let cluster: BTreeMap<&str, usize> = rows
                .iter()
                .map(|r| r.sensor_id.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, s)| (s, i))
                .collect();
            for r in rows.iter().filter(|r| r.op_hour >= burn_in) {
                let y = match outcome {
                    Outcome::CorrectionError => Some(r.error),
                    _ => r.norm_error,
                };
                let (Some(y), Some(label)) = (y, stratify.label(by_id.get(r.sensor_id.as_str()).copied())) else {
                    continue;
                };
                points.push(TrendPoint {
                    op_hour: r.op_hour as f64,
                    y,
                    weight: 1.0,
                    cluster: cluster[r.sensor_id.as_str()],
                });
                labels.push(label);
            }
        }
        _ => {}
    }
    (points, labels)
}

/// `table4_trends.csv` / `trends.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub outcome: String,
    pub stratum_type: String,
    pub stratum: String,
    pub n: usize,
    pub intercept: Option<f64>,
    pub slope_per_hour: Option<f64>,
    pub slope_per_year: Option<f64>,
    pub ci_lower_per_year: Option<f64>,
    pub ci_upper_per_year: Option<f64>,
    pub p_value: Option<f64>,
    /// p-value of the stratum × hour interaction over the family.
    pub interaction_p: Option<f64>,
    pub note: Option<String>,
}

fn effective_options(outcome: Outcome, opts: &TrendOptions) -> TrendOptions {
    // Flag percentages are already aggregated over sensors.
    match outcome {
        Outcome::PctFlagged => TrendOptions {
            cluster_robust: false,
            ..*opts
        },
        _ => TrendOptions {
            weighted: false,
            ..*opts
        },
    }
}

pub fn trend_table(
    outcome: Outcome,
    data: &OutcomeData,
    meta: &[SensorMeta],
    stratify: Stratify,
    burn_in: usize,
    opts: &TrendOptions,
) -> Result<Vec<TrendRow>> {
    let (points, labels) = outcome_points(outcome, data, meta, stratify, burn_in);
    let opts = effective_options(outcome, opts);
    let fits = stratified_trends(outcome, &points, &labels, &opts)?;
    Ok(trend_rows(&fits, stratify))
}

fn trend_rows(fits: &StratifiedTrends, stratify: Stratify) -> Vec<TrendRow> {
    let interaction_p = fits.interaction.as_ref().map(|f| f.p_value);
    if fits.strata.is_empty() {
        return vec![TrendRow {
            outcome: fits.outcome.to_string(),
            stratum_type: stratify.as_str().into(),
            stratum: stratify.as_str().into(),
            n: 0,
            intercept: None,
            slope_per_hour: None,
            slope_per_year: None,
            ci_lower_per_year: None,
            ci_upper_per_year: None,
            p_value: None,
            interaction_p: None,
            note: Some("no data".into()),
        }];
    }
    fits.strata
        .iter()
        .map(|s| {
            let f = s.fit.as_ref();
            TrendRow {
                outcome: fits.outcome.to_string(),
                stratum_type: stratify.as_str().into(),
                stratum: s.stratum.clone(),
                n: s.n,
                intercept: f.map(|f| f.intercept),
                slope_per_hour: f.map(|f| f.slope_per_hour),
                slope_per_year: f.map(|f| f.slope_per_year),
                ci_lower_per_year: f.map(|f| f.ci_lower_per_year),
                ci_upper_per_year: f.map(|f| f.ci_upper_per_year),
                p_value: f.map(|f| f.p_value),
                interaction_p,
                note: s.note.clone(),
            }
        })
        .collect()
}

/// `tableS4_model_trends.csv` row: one correction model and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrendRow {
    pub model_id: u8,
    pub n_train: usize,
    pub train_rmse: Option<f64>,
    pub train_r: Option<f64>,
    pub outcome: String,
    pub n: usize,
    pub slope_per_year: Option<f64>,
    pub ci_lower_per_year: Option<f64>,
    pub ci_upper_per_year: Option<f64>,
    pub p_value: Option<f64>,
    pub note: Option<String>,
}

pub fn model_trend_table(rows: &[OpRow], burn_in: usize, opts: &TrendOptions) -> Vec<ModelTrendRow> {
    let mut out = Vec::new();
    for model_id in 0..=8u8 {
        let spec = CorrectionModelSpec::new(model_id).expect("models 0-8 exist");
        let train: Vec<CorrectionRow> = rows.iter().map(|r| r.row.clone()).collect();
        let fit = fit_correction(&train, &spec);
        for outcome in [Outcome::CorrectionError, Outcome::NormalizedError] {
            let mut row = ModelTrendRow {
                model_id,
                n_train: 0,
                train_rmse: None,
                train_r: None,
                outcome: outcome.to_string(),
                n: 0,
                slope_per_year: None,
                ci_lower_per_year: None,
                ci_upper_per_year: None,
                p_value: None,
                note: None,
            };
            match &fit {
                Err(e) => row.note = Some(e.to_string()),
                Ok(fit) => {
                    row.n_train = fit.n_train;
                    row.train_rmse = fit.training.as_ref().map(|m| m.rmse);
                    row.train_r = fit.training.as_ref().and_then(|m| m.pearson_r);
                    let errors = correction_errors(fit, rows);
                    let (points, _) =
                        outcome_points(outcome, &OutcomeData::Errors(&errors), &[], Stratify::All, burn_in);
                    row.n = points.len();
                    match linear_trend(outcome, "all", &points, &effective_options(outcome, opts)) {
                        Ok(t) => {
                            row.slope_per_year = Some(t.slope_per_year);
                            row.ci_lower_per_year = Some(t.ci_lower_per_year);
                            row.ci_upper_per_year = Some(t.ci_upper_per_year);
                            row.p_value = Some(t.p_value);
                        }
                        Err(e) => row.note = Some(e.to_string()),
                    }
                }
            }
            out.push(row);
        }
    }
    out
}

/// `tableS5_interaction.csv` / `tableS6_interaction_normalized.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTableRow {
    pub threshold: f64,
    pub term: Option<String>,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub note: Option<String>,
}

pub fn interaction_table(
    outcome: Outcome,
    errors: &[ErrorRow],
    concentration: &BTreeMap<String, Vec<(i64, f64)>>,
    thresholds: &[f64],
    burn_in: usize,
) -> Vec<InteractionTableRow> {
    let exposure: BTreeMap<&str, _> = concentration
        .iter()
        .map(|(id, rows)| (id.as_str(), cumulative_exceedances(id, rows, thresholds)))
        .collect();
    let mut out = Vec::new();
    for (k, &threshold) in thresholds.iter().enumerate() {
        let rows: Vec<InteractionRow> = errors
            .iter()
            .filter(|r| r.op_hour >= burn_in as i64)
            .filter_map(|r| {
                let y = match outcome {
                    Outcome::NormalizedError => r.norm_error?,
                    _ => r.error,
                };
                let count = exposure.get(r.sensor_id.as_str()).map_or(0, |e| e.count_at(k, r.op_hour));
                Some(InteractionRow {
                    op_hour: r.op_hour as f64,
                    count: count as f64,
                    y,
                })
            })
            .collect();
        match interaction_trend(outcome, threshold, &rows) {
            Ok(fit) => {
                for j in 0..fit.names.len() {
                    out.push(InteractionTableRow {
                        threshold,
                        term: Some(fit.names[j].clone()),
                        estimate: Some(fit.coefficients[j]),
                        std_error: Some(fit.std_errors[j]),
                        ci_lower: Some(fit.ci_lower[j]),
                        ci_upper: Some(fit.ci_upper[j]),
                        p_value: Some(fit.p_values[j]),
                        n: fit.n,
                        note: None,
                    });
                }
            }
            Err(e) => out.push(InteractionTableRow {
                threshold,
                term: None,
                estimate: None,
                std_error: None,
                ci_lower: None,
                ci_upper: None,
                p_value: None,
                n: rows.len(),
                note: Some(e.to_string()),
            }),
        }
    }
    out
}

/// GAM of an error outcome on op_hour with cluster-bootstrap bands; each
/// replicate refits the correction on its resampled sensors before the GAM.
pub fn gam_with_correction_refit(
    outcome: Outcome,
    rows: &[OpRow],
    spec: &CorrectionModelSpec,
    burn_in: usize,
    gam: &GamConfig,
    boot: &BootstrapConfig,
) -> Result<GamFit> {
    let mut clusters: BTreeMap<&str, Vec<OpRow>> = BTreeMap::new();
    for r in rows {
        clusters.entry(r.row.sensor_id.as_str()).or_default().push(r.clone());
    }
    let clusters: Vec<Vec<OpRow>> = clusters.into_values().collect();
    let curve_xy = |sample: &[&Vec<OpRow>]| -> Result<(Vec<f64>, Vec<f64>)> {
        let pooled: Vec<OpRow> = sample.iter().flat_map(|c| c.iter().cloned()).collect();
        let train: Vec<CorrectionRow> = pooled.iter().map(|r| r.row.clone()).collect();
        let fit = fit_correction(&train, spec)?;
        let errors = correction_errors(&fit, &pooled);
        let (points, _) = outcome_points(outcome, &OutcomeData::Errors(&errors), &[], Stratify::All, burn_in);
        Ok(points.iter().map(|p| (p.op_hour, p.y)).unzip())
    };
    let all: Vec<&Vec<OpRow>> = clusters.iter().collect();
    let (x, y) = curve_xy(&all).context("full-data correction fit")?;
    let mut fit = fit_pspline_gam(&x, &y, gam)?;
    let replicate_config = GamConfig {
        domain: Some((fit.grid[0], *fit.grid.last().expect("grid is non-empty"))),
        ..gam.clone()
    };
    let bands = driftwatch_core::trend::cluster_bootstrap_bands(&clusters, boot, |sample| {
        let (x, y) = curve_xy(sample).map_err(|e| driftwatch_core::Error::InsufficientData(e.to_string()))?;
        Ok(fit_pspline_gam(&x, &y, &replicate_config)?.curve)
    })?;
    fit.bands = Some(bands);
    Ok(fit)
}

/// GAM of the flag indicator (as a percentage) on op_hour, clustered by sensor.
pub fn gam_flags(
    flags: &BTreeMap<String, Vec<(i64, bool)>>,
    burn_in: usize,
    gam: &GamConfig,
    boot: &BootstrapConfig,
) -> Result<GamFit> {
    let clusters: Vec<Vec<(f64, f64)>> = flags
        .values()
        .map(|s| {
            s.iter()
                .filter(|r| r.0 >= burn_in as i64)
                .map(|&(h, f)| (h as f64, 100.0 * f as u8 as f64))
                .collect()
        })
        .collect();
    Ok(driftwatch_core::trend::bootstrap_gam(&clusters, gam, boot)?)
}

/// GAM on precomputed error rows (no correction refit), clustered by sensor.
pub fn gam_errors(
    outcome: Outcome,
    errors: &[ErrorRow],
    burn_in: usize,
    gam: &GamConfig,
    boot: &BootstrapConfig,
) -> Result<GamFit> {
    let mut clusters: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in errors.iter().filter(|r| r.op_hour >= burn_in as i64) {
        let y = match outcome {
            Outcome::NormalizedError => r.norm_error,
            _ => Some(r.error),
        };
        if let Some(y) = y {
            clusters.entry(r.sensor_id.as_str()).or_default().push((r.op_hour as f64, y));
        }
    }
    let clusters: Vec<Vec<(f64, f64)>> = clusters.into_values().collect();
    Ok(driftwatch_core::trend::bootstrap_gam(&clusters, gam, boot)?)
}
