use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InjectionMode;
use crate::degradation::{classify_permanent, forward_cumulative_mean, DEFAULT_MIN_HOURS, DEFAULT_THRESHOLD};
use crate::{Error, Result};

pub const LABELS_FILE: &str = "labels.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionLabel {
    /// Position in the scenario's injection list; the flag-rate process
    /// comes last.
    pub injection: usize,
    pub mode: InjectionMode,
    pub onset_hour: u32,
    pub magnitude: f64,
    /// Affected operational hours, ascending.
    pub hours: Vec<u32>,
}

impl InjectionLabel {
    fn makes_channels_disagree(&self) -> bool {
        matches!(self.mode, InjectionMode::ChannelDivergence | InjectionMode::ChannelDeath)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLabels {
    pub sensor_id: String,
    pub injections: Vec<InjectionLabel>,
    /// Hours where a divergence or death injection is active.
    pub n_disagreeing_hours: usize,
    /// The default classifier applied to the planted disagreement indicator.
    pub permanently_degraded: bool,
}

impl SensorLabels {
    pub(super) fn new(sensor_id: &str, hours: u32, injections: Vec<InjectionLabel>) -> Self {
        let indicator = Self::indicator_from(&injections, hours);
        let (permanently_degraded, _) =
            classify_permanent(&forward_cumulative_mean(&indicator), DEFAULT_THRESHOLD, DEFAULT_MIN_HOURS);
        SensorLabels {
            sensor_id: sensor_id.to_string(),
            n_disagreeing_hours: indicator.iter().filter(|f| **f).count(),
            injections,
            permanently_degraded,
        }
    }

    fn indicator_from(injections: &[InjectionLabel], hours: u32) -> Vec<bool> {
        let mut out = vec![false; hours as usize];
        for inj in injections.iter().filter(|i| i.makes_channels_disagree()) {
            for &h in &inj.hours {
                out[h as usize] = true;
            }
        }
        out
    }

    /// Planted disagreement per operational hour.
    pub fn indicator(&self, hours: u32) -> Vec<bool> {
        Self::indicator_from(&self.injections, hours)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetLabels {
    pub seed: u64,
    pub sensors: BTreeMap<String, SensorLabels>,
}

impl FleetLabels {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
