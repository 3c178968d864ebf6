//! Leave-one-sensor-out cross-validation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_correction, CorrectionModelSpec, CorrectionRow};
use crate::flagging::{agreement_metrics, AgreementMetrics};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoFold {
    pub sensor_id: String,
    pub n_test: usize,
    pub metrics: Option<AgreementMetrics>,
    /// Why the fold produced no predictions, if it did not.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoResult {
    pub model_id: u8,
    pub folds: Vec<LosoFold>,
    /// Fits attempted: one per sensor.
    pub n_fits: usize,
    pub pooled: Option<AgreementMetrics>,
    /// `(row index, held-out prediction)` in input order.
    #[serde(skip)]
    pub predictions: Vec<(usize, f64)>,
}

pub fn loso_cross_validate(rows: &[CorrectionRow], spec: &CorrectionModelSpec) -> Result<LosoResult> {
    let mut by_sensor: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_sensor.entry(r.sensor_id.as_str()).or_default().push(i);
    }
    if by_sensor.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-sensor-out needs at least 2 sensors, got {}",
            by_sensor.len()
        )));
    }
    let sensors: Vec<(&str, Vec<usize>)> = by_sensor.into_iter().collect();
    let folds: Vec<(LosoFold, Vec<(usize, f64)>)> = sensors
        .par_iter()
        .map(|(id, test_idx)| {
            let train: Vec<CorrectionRow> = rows.iter().filter(|r| r.sensor_id != *id).cloned().collect();
            let mut fold = LosoFold {
                sensor_id: id.to_string(),
                n_test: test_idx.len(),
                metrics: None,
                skipped: None,
            };
            let fit = match fit_correction(&train, spec) {
                Ok(f) => f,
                Err(e) => {
                    fold.skipped = Some(e.to_string());
                    return (fold, Vec::new());
                }
            };
            let preds: Vec<(usize, f64)> = test_idx
                .iter()
                .filter_map(|&i| fit.predict(&rows[i]).map(|p| (i, p)))
                .collect();
            let (p, r): (Vec<f64>, Vec<f64>) = preds.iter().map(|&(i, p)| (p, rows[i].pm25_ref)).unzip();
            fold.metrics = agreement_metrics(&p, &r).ok();
            (fold, preds)
        })
        .collect();

    let n_fits = folds.len();
    let mut predictions: Vec<(usize, f64)> = Vec::with_capacity(rows.len());
    let mut out_folds = Vec::with_capacity(n_fits);
    for (f, p) in folds {
        out_folds.push(f);
        predictions.extend(p);
    }
    predictions.sort_by_key(|p| p.0);
    let (p, r): (Vec<f64>, Vec<f64>) = predictions.iter().map(|&(i, p)| (p, rows[i].pm25_ref)).unzip();
    Ok(LosoResult {
        model_id: spec.model_id,
        folds: out_folds,
        n_fits,
        pooled: agreement_metrics(&p, &r).ok(),
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::row;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn fleet(seed: u64, sensors: usize, per: usize, rh_for: impl Fn(usize, &mut ChaCha8Rng) -> f64) -> Vec<CorrectionRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::new();
        for s in 0..sensors {
            for i in 0..per {
                let pm: f64 = rng.random_range(2.0..60.0);
                let rh = rh_for(s, &mut rng);
                let reference = 5.92 + 0.57 * pm - 0.091 * rh + 0.004 * rh * rh * (s == 0) as u8 as f64
                    + noise.sample(&mut rng);
                out.push(row(&format!("s{s}"), i, pm, rh, 20.0, reference));
            }
        }
        out
    }

    #[test]
    fn one_fit_per_sensor() {
        let rows = fleet(1, 5, 40, |_, r| r.random_range(20.0..80.0));
        let res = loso_cross_validate(&rows, &CorrectionModelSpec::new(2).unwrap()).unwrap();
        assert_eq!(res.n_fits, 5);
        assert_eq!(res.folds.len(), 5);
        assert_eq!(res.predictions.len(), rows.len());
    }

    #[test]
    fn identical_sensors_match_training_fit() {
        let one = fleet(2, 1, 60, |_, r| r.random_range(20.0..80.0));
        let mut rows = one.clone();
        rows.extend(one.iter().map(|r| CorrectionRow { sensor_id: "twin".into(), ..r.clone() }));
        let spec = CorrectionModelSpec::new(2).unwrap();
        let train = super::super::fit_correction(&rows, &spec).unwrap().training.unwrap();
        let res = loso_cross_validate(&rows, &spec).unwrap();
        let pooled = res.pooled.unwrap();
        assert!((pooled.rmse - train.rmse).abs() < 1e-9);
    }

    #[test]
    fn unique_rh_regime_generalizes_worse() {
        // Sensor 0 sits in a humid regime with extra curvature the others lack.
        let rows = fleet(3, 4, 200, |s, r| if s == 0 { r.random_range(85.0..98.0) } else { r.random_range(20.0..60.0) });
        let spec = CorrectionModelSpec::new(2).unwrap();
        let res = loso_cross_validate(&rows, &spec).unwrap();
        let s0: Vec<CorrectionRow> = rows.iter().filter(|r| r.sensor_id == "s0").cloned().collect();
        let in_sample = super::super::fit_correction(&s0, &spec).unwrap().training.unwrap().rmse;
        assert!(res.folds[0].metrics.unwrap().rmse > in_sample);
    }

    #[test]
    fn degenerate_fold_is_skipped() {
        let mut rows = fleet(4, 2, 30, |_, r| r.random_range(20.0..80.0));
        // Without s0 the remaining sensor has constant RH: rank deficient.
        for r in rows.iter_mut().filter(|r| r.sensor_id == "s1") {
            r.rh = 40.0;
        }
        let res = loso_cross_validate(&rows, &CorrectionModelSpec::new(2).unwrap()).unwrap();
        assert!(res.folds[0].skipped.is_some());
        assert!(res.folds[1].skipped.is_none());
        assert_eq!(res.n_fits, 2);
        assert!(loso_cross_validate(&rows[..30], &CorrectionModelSpec::new(2).unwrap()).is_err());
    }
}
