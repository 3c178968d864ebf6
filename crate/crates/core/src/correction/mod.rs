//! The OLS correction-model family, leave-one-sensor-out validation and
//! correction-error series.
//!
//! RH enters linear terms in percent; the hygroscopic term `RH²/(1−RH)` of
//! model 7 uses RH as a fraction.

mod loso;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::collocation::MergedRow;
use crate::flagging::{agreement_metrics, AgreementMetrics};
use crate::stats::{ols, OlsResult};
use crate::{Error, Result};

pub use loso::{loso_cross_validate, LosoFold, LosoResult};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Pm,
    Rh,
    T,
    RhT,
    PmRh,
    PmT,
    /// `f²/(1−f)` with `f = RH/100`.
    RhGrowth,
    PmRhGrowth,
    PmRhT,
}

impl Term {
    pub fn name(&self) -> &'static str {
        match self {
            Term::Pm => "PM",
            Term::Rh => "RH",
            Term::T => "T",
            Term::RhT => "RH:T",
            Term::PmRh => "PM:RH",
            Term::PmT => "PM:T",
            Term::RhGrowth => "RH2/(1-RH)",
            Term::PmRhGrowth => "PM:RH2/(1-RH)",
            Term::PmRhT => "PM:RH:T",
        }
    }

    /// `None` when the growth term is singular (RH ≥ 100%).
    pub fn value(&self, row: &CorrectionRow) -> Option<f64> {
        let (pm, rh, t) = (row.pm25, row.rh, row.temp);
        let growth = || {
            let f = rh / 100.0;
            (f < 1.0).then(|| f * f / (1.0 - f))
        };
        Some(match self {
            Term::Pm => pm,
            Term::Rh => rh,
            Term::T => t,
            Term::RhT => rh * t,
            Term::PmRh => pm * rh,
            Term::PmT => pm * t,
            Term::RhGrowth => growth()?,
            Term::PmRhGrowth => pm * growth()?,
            Term::PmRhT => pm * rh * t,
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model 0 is the uncorrected sensor value; models 1–8 are OLS fits with
/// an intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionModelSpec {
    pub model_id: u8,
    pub terms: Vec<Term>,
}

impl CorrectionModelSpec {
    pub fn new(model_id: u8) -> Result<Self> {
        use Term::*;
        let terms = match model_id {
            0 => vec![],
            1 => vec![Pm],
            2 => vec![Pm, Rh],
            3 => vec![Pm, T],
            4 => vec![Pm, Rh, T, RhT],
            5 => vec![Pm, Rh, PmRh],
            6 => vec![Pm, T, PmT],
            7 => vec![Pm, RhGrowth, PmRhGrowth],
            8 => vec![Pm, Rh, T, PmRh, PmT, RhT, PmRhT],
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown correction model {model_id}; expected 0-8"
                )))
            }
        };
        Ok(CorrectionModelSpec { model_id, terms })
    }

    pub fn is_raw(&self) -> bool {
        self.model_id == 0
    }

    /// Intercept first, then terms in declared order.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string())
            .chain(self.terms.iter().map(|t| t.name().to_string()))
            .collect()
    }

    pub fn design_row(&self, row: &CorrectionRow) -> Option<Vec<f64>> {
        std::iter::once(Some(1.0))
            .chain(self.terms.iter().map(|t| t.value(row)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub sensor_id: String,
    pub hour: DateTime<Utc>,
    /// Uncorrected sensor PM2.5 (cf_1 channel mean), µg/m³.
    pub pm25: f64,
    /// Percent.
    pub rh: f64,
    /// °C.
    pub temp: f64,
    pub pm25_ref: f64,
}

impl From<&MergedRow> for CorrectionRow {
    fn from(r: &MergedRow) -> Self {
        CorrectionRow {
            sensor_id: r.sensor_id.clone(),
            hour: r.hour,
            pm25: r.pm25_cf1_mean,
            rh: r.rh_mean,
            temp: r.temp_mean,
            pm25_ref: r.pm25_ref,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    /// Index into the input rows of each design row.
    pub row_index: Vec<usize>,
    /// Rows dropped for a singular term.
    pub dropped: usize,
}

pub fn build_design(rows: &[CorrectionRow], spec: &CorrectionModelSpec) -> Design {
    let p = spec.terms.len() + 1;
    let mut data = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    let mut row_index = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if let Some(d) = spec.design_row(r) {
            data.extend(d);
            y.push(r.pm25_ref);
            row_index.push(i);
        }
    }
    let dropped = rows.len() - y.len();
    Design {
        x: DMatrix::from_row_slice(y.len(), p, &data),
        y,
        row_index,
        dropped,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedCorrection {
    pub spec: CorrectionModelSpec,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Training agreement of corrected vs reference; absent for the frozen model.
    pub training: Option<AgreementMetrics>,
    pub n_train: usize,
    pub dropped_rows: usize,
    #[serde(skip)]
    pub ols: Option<OlsResult>,
}

impl FittedCorrection {
    /// The nationwide RH-linear correction `5.92 + 0.57·PM − 0.091·RH`.
    pub fn frozen() -> Self {
        let spec = CorrectionModelSpec::new(2).expect("model 2 exists");
        FittedCorrection {
            names: spec.column_names(),
            spec,
            coefficients: vec![5.92, 0.57, -0.091],
            std_errors: vec![f64::NAN; 3],
            training: None,
            n_train: 0,
            dropped_rows: 0,
            ols: None,
        }
    }

    /// The uncorrected sensor value (model 0).
    pub fn raw() -> Self {
        let spec = CorrectionModelSpec::new(0).expect("model 0 exists");
        FittedCorrection {
            names: vec![],
            spec,
            coefficients: vec![],
            std_errors: vec![],
            training: None,
            n_train: 0,
            dropped_rows: 0,
            ols: None,
        }
    }

    pub fn predict(&self, row: &CorrectionRow) -> Option<f64> {
        if self.spec.is_raw() {
            return Some(row.pm25);
        }
        let d = self.spec.design_row(row)?;
        Some(d.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum())
    }
}

/// OLS fit of reference on the model's terms. Flagged rows should be removed
/// beforehand.
pub fn fit_correction(rows: &[CorrectionRow], spec: &CorrectionModelSpec) -> Result<FittedCorrection> {
    if spec.is_raw() {
        let mut fit = FittedCorrection::raw();
        let (pred, reference): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.pm25, r.pm25_ref)).unzip();
        fit.training = agreement_metrics(&pred, &reference).ok();
        fit.n_train = rows.len();
        return Ok(fit);
    }
    let design = build_design(rows, spec);
    let names = spec.column_names();
    let res = ols(&design.y, &design.x, &names)?;
    let fitted: Vec<f64> = design.y.iter().zip(&res.residuals).map(|(y, e)| y - e).collect();
    Ok(FittedCorrection {
        spec: spec.clone(),
        names,
        coefficients: res.coefficients.clone(),
        std_errors: res.std_errors.clone(),
        training: agreement_metrics(&fitted, &design.y).ok(),
        n_train: design.y.len(),
        dropped_rows: design.dropped,
        ols: Some(res),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionError {
    pub sensor_id: String,
    pub hour: DateTime<Utc>,
    pub corrected: f64,
    pub reference: f64,
    /// `corrected − reference`.
    pub error: f64,
    /// `error / ((corrected + reference) / 2)`; `None` when the mean is 0.
    pub norm_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedCorrection {
    pub errors: Vec<CorrectionError>,
    /// Rows whose design row was undefined.
    pub dropped: usize,
}

pub fn correction_error(sensor_id: &str, hour: DateTime<Utc>, corrected: f64, reference: f64) -> CorrectionError {
    let error = corrected - reference;
    let mid = (corrected + reference) / 2.0;
    CorrectionError {
        sensor_id: sensor_id.to_string(),
        hour,
        corrected,
        reference,
        error,
        norm_error: (mid != 0.0).then(|| error / mid),
    }
}

pub fn apply_correction(fit: &FittedCorrection, rows: &[CorrectionRow]) -> AppliedCorrection {
    let errors: Vec<CorrectionError> = rows
        .iter()
        .filter_map(|r| fit.predict(r).map(|c| correction_error(&r.sensor_id, r.hour, c, r.pm25_ref)))
        .collect();
    AppliedCorrection {
        dropped: rows.len() - errors.len(),
        errors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorByHour {
    pub op_hour: i64,
    pub mean_error: f64,
    /// Mean over rows with a defined normalized error.
    pub mean_norm_error: Option<f64>,
    pub n: usize,
}

/// Mean correction error across sensors at each operational hour.
/// Input items are `(op_hour, error, norm_error)`.
pub fn error_by_op_hour<I>(errors: I) -> Vec<ErrorByHour>
where
    I: IntoIterator<Item = (i64, f64, Option<f64>)>,
{
    let mut acc: BTreeMap<i64, (f64, usize, f64, usize)> = BTreeMap::new();
    for (h, e, ne) in errors {
        let a = acc.entry(h).or_default();
        a.0 += e;
        a.1 += 1;
        if let Some(ne) = ne {
            a.2 += ne;
            a.3 += 1;
        }
    }
    acc.into_iter()
        .map(|(op_hour, (s, n, ns, nn))| ErrorByHour {
            op_hour,
            mean_error: s / n as f64,
            mean_norm_error: (nn > 0).then(|| ns / nn as f64),
            n,
        })
        .collect()
}

#[cfg(test)]
pub(super) mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(super) fn row(sensor: &str, i: usize, pm: f64, rh: f64, t: f64, reference: f64) -> CorrectionRow {
        CorrectionRow {
            sensor_id: sensor.into(),
            hour: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + Duration::hours(i as i64),
            pm25: pm,
            rh,
            temp: t,
            pm25_ref: reference,
        }
    }

    #[test]
    fn design_rows_follow_term_order() {
        let r = row("s", 0, 10.0, 50.0, 20.0, 0.0);
        assert_eq!(CorrectionModelSpec::new(2).unwrap().design_row(&r).unwrap(), [1.0, 10.0, 50.0]);
        assert_eq!(CorrectionModelSpec::new(5).unwrap().design_row(&r).unwrap(), [1.0, 10.0, 50.0, 500.0]);
        let m7 = CorrectionModelSpec::new(7).unwrap().design_row(&r).unwrap();
        assert_eq!(m7, [1.0, 10.0, 0.5, 5.0]);
        assert_eq!(CorrectionModelSpec::new(8).unwrap().column_names().len(), 8);
        assert_eq!(CorrectionModelSpec::new(2).unwrap().terms, [Term::Pm, Term::Rh]);
        assert!(CorrectionModelSpec::new(9).is_err());
    }

    #[test]
    fn growth_term_singular_rows_dropped() {
        let rows = vec![row("s", 0, 10.0, 100.0, 20.0, 5.0), row("s", 1, 10.0, 40.0, 20.0, 5.0)];
        let d = build_design(&rows, &CorrectionModelSpec::new(7).unwrap());
        assert_eq!(d.dropped, 1);
        assert_eq!(d.row_index, [1]);
        assert_eq!(build_design(&rows, &CorrectionModelSpec::new(2).unwrap()).dropped, 0);
    }

    #[test]
    fn frozen_model_value() {
        let pred = FittedCorrection::frozen().predict(&row("s", 0, 10.0, 50.0, 20.0, 0.0)).unwrap();
        assert!((pred - 7.07).abs() < 1e-12, "{pred}");
    }

    #[test]
    fn exact_linear_data_interpolates() {
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let pm = 3.0 + i as f64;
                let rh = 20.0 + (i * 7 % 60) as f64;
                row("s", i, pm, rh, 10.0, 1.0 + 0.5 * pm - 0.1 * rh)
            })
            .collect();
        let fit = fit_correction(&rows, &CorrectionModelSpec::new(2).unwrap()).unwrap();
        let m = fit.training.unwrap();
        assert!(m.rmse < 1e-10);
        assert!((m.pearson_r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn training_errors_average_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let rows: Vec<_> = (0..500)
            .map(|i| {
                let pm: f64 = rng.random_range(1.0..80.0);
                let rh: f64 = rng.random_range(10.0..95.0);
                let t: f64 = rng.random_range(-5.0..35.0);
                row("s", i, pm, rh, t, 5.92 + 0.57 * pm - 0.091 * rh + noise.sample(&mut rng))
            })
            .collect();
        for id in 1..=8 {
            let fit = fit_correction(&rows, &CorrectionModelSpec::new(id).unwrap()).unwrap();
            assert_eq!(fit.coefficients.len(), fit.spec.terms.len() + 1);
            let applied = apply_correction(&fit, &rows);
            let mean = applied.errors.iter().map(|e| e.error).sum::<f64>() / applied.errors.len() as f64;
            let scale = rows.iter().map(|r| r.pm25_ref.abs()).sum::<f64>() / rows.len() as f64;
            assert!(mean.abs() < 1e-8 * scale, "model {id}: {mean}");
        }
    }

    #[test]
    fn collinear_terms_are_named() {
        let rows: Vec<_> = (0..20).map(|i| row("s", i, i as f64, 2.0 * i as f64, 5.0, i as f64)).collect();
        match fit_correction(&rows, &CorrectionModelSpec::new(8).unwrap()) {
            Err(Error::RankDeficient { terms, .. }) => assert!(!terms.is_empty()),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn error_formulas() {
        let e = correction_error("s", Utc::now(), 12.0, 8.0);
        assert_eq!(e.error, 4.0);
        assert_eq!(e.norm_error, Some(0.4));
        let same = correction_error("s", Utc::now(), 8.0, 8.0);
        assert_eq!((same.error, same.norm_error), (0.0, Some(0.0)));
        assert_eq!(correction_error("s", Utc::now(), 0.0, 0.0).norm_error, None);
    }

    #[test]
    fn error_by_hour_partition() {
        let rows = error_by_op_hour([(0, 1.0, None), (0, -1.0, Some(0.2)), (3, 2.0, Some(0.1))]);
        assert_eq!(rows[0].mean_error, 0.0);
        assert_eq!(rows[0].mean_norm_error, Some(0.2));
        assert_eq!(rows[1].n, 1);
        let single = error_by_op_hour([(0, 0.5, None), (1, 0.7, None)]);
        assert_eq!(single.iter().map(|r| r.mean_error).collect::<Vec<_>>(), [0.5, 0.7]);
        let weighted: f64 = rows.iter().map(|r| r.mean_error * r.n as f64).sum::<f64>() / 3.0;
        assert!((weighted - 2.0 / 3.0).abs() < 1e-15);
    }
}
