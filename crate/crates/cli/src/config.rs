//! The `report` configuration file (JSON). Relative input paths resolve
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use driftwatch_core::correction::CorrectionModelSpec;
use driftwatch_core::degradation::DegradationPolicy;
use driftwatch_core::ingest::{HourlyConfig, QcBounds, RawSchema};
use driftwatch_core::trend::{BootstrapConfig, GamConfig, TrendOptions};
use driftwatch_core::HOURS_PER_YEAR;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// A raw CSV file or a directory of them.
    pub raw: PathBuf,
    pub sensors: PathBuf,
    pub monitors: PathBuf,
    pub reference: PathBuf,
    /// Optional climate-zone lookup (CSV table or GeoJSON).
    pub zones: Option<PathBuf>,
    pub raw_schema: RawSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagSettings {
    pub abs_threshold: f64,
    pub percentile: f64,
    /// Flag with the sweep's selected percentile instead of `percentile`.
    pub use_sweep_selection: bool,
}

impl Default for FlagSettings {
    fn default() -> Self {
        FlagSettings {
            abs_threshold: driftwatch_core::flagging::DEFAULT_ABS_THRESHOLD,
            percentile: driftwatch_core::flagging::DEFAULT_PERCENTILE,
            use_sweep_selection: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSettings {
    pub model: u8,
    pub loso: bool,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        CorrectionSettings { model: 2, loso: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub inputs: Inputs,
    pub output_dir: Option<PathBuf>,
    pub qc: QcBounds,
    pub hourly: HourlyConfig,
    pub burn_in_hours: usize,
    pub radius_m: f64,
    pub flag: FlagSettings,
    pub degradation: DegradationPolicy,
    pub correction: CorrectionSettings,
    pub trend: TrendOptions,
    pub exceedance_thresholds: Vec<f64>,
    pub gam: GamConfig,
    pub bootstrap: BootstrapConfig,
    pub hours_per_year: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            inputs: Inputs::default(),
            output_dir: None,
            qc: QcBounds::default(),
            hourly: HourlyConfig::default(),
            burn_in_hours: 20,
            radius_m: driftwatch_core::collocation::DEFAULT_RADIUS_M,
            flag: FlagSettings::default(),
            degradation: DegradationPolicy::default(),
            correction: CorrectionSettings::default(),
            trend: TrendOptions::default(),
            exceedance_thresholds: driftwatch_core::degradation::DEFAULT_EXCEEDANCE_THRESHOLDS.to_vec(),
            gam: GamConfig::default(),
            bootstrap: BootstrapConfig::default(),
            hours_per_year: HOURS_PER_YEAR,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ReportConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ReportConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [&mut i.raw, &mut i.sensors, &mut i.monitors, &mut i.reference] {
            resolve(base, p);
        }
        if let Some(z) = i.zones.as_mut() {
            resolve(base, z);
        }
        if let Some(o) = cfg.output_dir.as_mut() {
            resolve(base, o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.inputs;
        for (name, p) in [("raw", &i.raw), ("sensors", &i.sensors), ("monitors", &i.monitors), ("reference", &i.reference)] {
            if p.as_os_str().is_empty() {
                bail!("config is missing inputs.{name}");
            }
        }
        if !(0.0..1.0).contains(&self.flag.percentile) {
            bail!("flag.percentile must lie in [0, 1)");
        }
        if !(self.radius_m > 0.0) {
            bail!("radius_m must be positive");
        }
        if self.hours_per_year != HOURS_PER_YEAR {
            bail!("hours_per_year must be {HOURS_PER_YEAR}; other year lengths are not supported");
        }
        CorrectionModelSpec::new(self.correction.model)?;
        Ok(())
    }
}
