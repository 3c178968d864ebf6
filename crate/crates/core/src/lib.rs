//! Degradation analytics for dual-channel low-cost PM2.5 sensors.
//!
//! The crate covers the whole chain from raw 15-minute sensor records to
//! degradation-trend estimates:
//!
//! * [`ingest`]: parsing, QC exclusion rules, hourly aggregation, burn-in trim
//!   and climate-zone assignment.
//! * [`acquisition`]: rate-limited HTTP clients that download sensor history
//!   and regulatory hourly data into the ingest file schemas.
//! * [`collocation`]: sensor/reference-monitor matching and hourly merges.
//! * [`flagging`]: the dual-channel disagreement flag and its percentile
//!   grid search.
//! * [`degradation`]: forward cumulative flag means, permanent-degradation
//!   verdicts, fleet flag-rate series and flagged/unflagged contrasts.
//! * [`correction`]: the OLS correction-model family with leave-one-sensor-out
//!   validation.
//! * [`trend`]: linear, stratified and interaction trend fits, p-spline GAMs
//!   with GCV, and cluster-bootstrap bands.
//! * [`stats`]: the statistical primitives everything above is built on.
//! * [`synthfleet`]: a seeded synthetic fleet generator with ground-truth labels.

pub mod acquisition;
pub mod collocation;
pub mod correction;
pub mod degradation;
mod error;
pub mod flagging;
pub mod ingest;
pub mod schema;
pub mod stats;
pub mod synthfleet;
pub mod time;
pub mod trend;

pub use error::{Error, Result};

pub use collocation::{CollocationPair, MergedRow, MonitorSite, ReferenceRecord};
pub use correction::{CorrectionModelSpec, CorrectionRow, FittedCorrection, Term};
pub use degradation::{ConditionContrast, DegradationProfile, ExposureSeries};
pub use flagging::{FlagRule, FlaggedRecord, SweepResult};
pub use ingest::{ClimateZone, HourlyRecord, Location, QcReport, RawRecord, SensorMeta};
pub use stats::OlsResult;
pub use trend::{GamFit, InteractionFit, TrendFit};

/// Hours in a (non-leap) year; the conversion between per-hour and per-year slopes.
pub const HOURS_PER_YEAR: f64 = 8760.0;
