//! The `report` chain: every figure and table series plus a manifest.

use std::path::Path;

use anyhow::{Context, Result};
use driftwatch_core::correction::{error_by_op_hour, fit_correction, loso_cross_validate, CorrectionModelSpec};
use driftwatch_core::degradation::condition_contrast;
use driftwatch_core::flagging::{sweep_percentiles, AgreementMetrics, SweepConfig};
use driftwatch_core::schema::{read_monitors, read_reference, write_csv};
use driftwatch_core::trend::Outcome;
use driftwatch_core::{CorrectionRow, QcReport};
use serde::Serialize;

use crate::config::ReportConfig;
use crate::pipeline::*;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: &'static str,
    pub file: &'static str,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionSummary {
    pub model_id: u8,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_train: usize,
    pub training: Option<AgreementMetrics>,
    pub loso_pooled: Option<AgreementMetrics>,
    pub loso_fits: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GamSummary {
    pub outcome: Outcome,
    pub lambda: f64,
    pub edf: f64,
    pub replicates_ok: usize,
    pub replicates_dropped: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub sensors: usize,
    pub qc: QcReport,
    pub hourly_records: usize,
    pub pairs: usize,
    pub merged_rows: usize,
    pub sweep_selected_x: f64,
    pub sweep_best_r_x: Option<f64>,
    pub percentile_used: f64,
    pub flagged_hours: usize,
    pub degraded_sensors: usize,
    pub correction: CorrectionSummary,
    pub gam: GamSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub burn_in_hours: usize,
    pub artifacts: Vec<Artifact>,
    pub summary: Summary,
}

#[derive(Serialize)]
struct SweepCsvRow {
    x: f64,
    r: Option<f64>,
    nrmse: Option<f64>,
    pct_flagged: f64,
    n_retained: usize,
}

#[derive(Serialize)]
struct GamArtifact<'a> {
    outcome: Outcome,
    model_id: u8,
    burn_in_hours: usize,
    fit: &'a driftwatch_core::GamFit,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn run_report(cfg: &ReportConfig, out_dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let i = &cfg.inputs;
    let ingested = ingest(&i.raw, &i.sensors, i.zones.as_deref(), &i.raw_schema, &cfg.qc, &cfg.hourly)?;
    let monitors = read_monitors(&i.monitors)?;
    let reference = read_reference(&i.reference)?;
    let pairs = collocate_stage(&ingested.sensors, &monitors, &ingested.hourly, reference, cfg.radius_m);
    let mut artifacts = Vec::new();

    let sweep = sweep_percentiles(
        &pairs,
        &SweepConfig {
            abs_threshold: cfg.flag.abs_threshold,
            ..Default::default()
        },
    )?;
    let sweep_rows: Vec<SweepCsvRow> = sweep
        .rows
        .iter()
        .map(|r| SweepCsvRow {
            x: r.x,
            r: r.pearson_r,
            nrmse: r.nrmse,
            pct_flagged: r.pct_flagged,
            n_retained: r.n_retained,
        })
        .collect();
    write_csv(&out_dir.join("fig2_sweep.csv"), &sweep_rows, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "sweep",
        file: "fig2_sweep.csv",
        rows: sweep_rows.len(),
    });

    let percentile = if cfg.flag.use_sweep_selection {
        sweep.selected_x
    } else {
        cfg.flag.percentile
    };
    let flagged = flag_stage(ingested.hourly.clone(), percentile, cfg.flag.abs_threshold)?;
    let series = op_series(&ingested.sensors, &flagged);

    let rate =
        driftwatch_core::degradation::flag_rate_by_op_hour(series.flags.values().map(Vec::as_slice));
    write_csv(&out_dir.join("fig3_flag_rate.csv"), &rate, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "flag_rate",
        file: "fig3_flag_rate.csv",
        rows: rate.len(),
    });

    let profs = profiles(&series, cfg.degradation);
    let prof_rows = profile_rows(&profs, &ingested.sensors);
    write_csv(&out_dir.join("fig4_degraded.csv"), &prof_rows, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "degraded_sensors",
        file: "fig4_degraded.csv",
        rows: prof_rows.len(),
    });

    let contrast = condition_contrast(&flagged);
    write_json(&out_dir.join("table2_contrast.json"), &contrast)?;

    let spec = CorrectionModelSpec::new(cfg.correction.model)?;
    let op_rows = correction_inputs(&pairs, &flagged, &series.starts);
    let train: Vec<CorrectionRow> = op_rows.iter().map(|r| r.row.clone()).collect();
    let fit = fit_correction(&train, &spec).context("correction fit")?;
    let loso = if cfg.correction.loso {
        match loso_cross_validate(&train, &spec) {
            Ok(l) => Some(l),
            Err(e) => {
                log::warn!("LOSO skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let errors = correction_errors(&fit, &op_rows);

    let by_hour = error_by_op_hour(errors.iter().map(|e| (e.op_hour, e.error, e.norm_error)));
    write_csv(&out_dir.join("fig5_error_by_hour.csv"), &by_hour, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "error_by_hour",
        file: "fig5_error_by_hour.csv",
        rows: by_hour.len(),
    });

    let gam = gam_with_correction_refit(
        Outcome::CorrectionError,
        &op_rows,
        &spec,
        cfg.burn_in_hours,
        &cfg.gam,
        &cfg.bootstrap,
    )
    .context("GAM fit")?;
    write_json(
        &out_dir.join("fig6_gam.json"),
        &GamArtifact {
            outcome: Outcome::CorrectionError,
            model_id: spec.model_id,
            burn_in_hours: cfg.burn_in_hours,
            fit: &gam,
        },
    )?;
    artifacts.push(Artifact {
        name: "gam",
        file: "fig6_gam.json",
        rows: gam.grid.len(),
    });
    artifacts.push(Artifact {
        name: "condition_contrast",
        file: "table2_contrast.json",
        rows: contrast.variables.len(),
    });

    let mut table4 = Vec::new();
    for outcome in [Outcome::PctFlagged, Outcome::CorrectionError, Outcome::NormalizedError] {
        let data = match outcome {
            Outcome::PctFlagged => OutcomeData::Flags(&series.flags),
            _ => OutcomeData::Errors(&errors),
        };
        for stratify in [Stratify::All, Stratify::Location, Stratify::ClimateZone] {
            table4.extend(trend_table(
                outcome,
                &data,
                &ingested.sensors,
                stratify,
                cfg.burn_in_hours,
                &cfg.trend,
            )?);
        }
    }
    write_csv(&out_dir.join("table4_trends.csv"), &table4, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "trends",
        file: "table4_trends.csv",
        rows: table4.len(),
    });

    let s4 = model_trend_table(&op_rows, cfg.burn_in_hours, &cfg.trend);
    write_csv(&out_dir.join("tableS4_model_trends.csv"), &s4, None::<&[&str]>)?;
    artifacts.push(Artifact {
        name: "model_trends",
        file: "tableS4_model_trends.csv",
        rows: s4.len(),
    });

    for (outcome, name, file) in [
        (Outcome::CorrectionError, "interaction", "tableS5_interaction.csv"),
        (
            Outcome::NormalizedError,
            "interaction_normalized",
            "tableS6_interaction_normalized.csv",
        ),
    ] {
        let rows = interaction_table(
            outcome,
            &errors,
            &series.concentration,
            &cfg.exceedance_thresholds,
            cfg.burn_in_hours,
        );
        write_csv(&out_dir.join(file), &rows, None::<&[&str]>)?;
        artifacts.push(Artifact {
            name,
            file,
            rows: rows.len(),
        });
    }

    let bands = gam.bands.as_ref();
    let manifest = Manifest {
        tool: "driftwatch",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.bootstrap.seed,
        burn_in_hours: cfg.burn_in_hours,
        artifacts,
        summary: Summary {
            sensors: ingested.sensors.len(),
            qc: ingested.qc,
            hourly_records: ingested.hourly.len(),
            pairs: pairs.len(),
            merged_rows: pairs.iter().map(|p| p.rows.len()).sum(),
            sweep_selected_x: sweep.selected_x,
            sweep_best_r_x: sweep.best_r_x,
            percentile_used: percentile,
            flagged_hours: flagged.iter().filter(|f| f.flag).count(),
            degraded_sensors: profs.iter().filter(|p| p.permanently_degraded).count(),
            correction: CorrectionSummary {
                model_id: spec.model_id,
                names: fit.names.clone(),
                coefficients: fit.coefficients.clone(),
                std_errors: fit.std_errors.clone(),
                n_train: fit.n_train,
                training: fit.training,
                loso_pooled: loso.as_ref().and_then(|l| l.pooled),
                loso_fits: loso.as_ref().map(|l| l.n_fits),
            },
            gam: GamSummary {
                outcome: Outcome::CorrectionError,
                lambda: gam.lambda,
                edf: gam.edf,
                replicates_ok: bands.map_or(0, |b| b.n_ok),
                replicates_dropped: bands.map_or(0, |b| b.n_dropped),
                warning: bands.and_then(|b| b.warning.clone()),
            },
        },
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
