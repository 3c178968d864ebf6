//! Degradation-outcome trends over operational time.

mod bootstrap;
mod interaction;
pub mod pspline;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::stats::{f_test_nested, ols, wls, FTest, OlsResult};
use crate::{Error, Result, HOURS_PER_YEAR};

pub use bootstrap::{
    bootstrap_gam, cluster_bootstrap_bands, replicate_draw, BootstrapBands, BootstrapConfig, DROP_WARNING_FRACTION,
};
pub use interaction::{interaction_trend, InteractionFit, InteractionRow};
pub use pspline::{fit_pspline_gam, gcv_select, GamConfig, GamFit, GcvPoint, PsplineBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PctFlagged,
    CorrectionError,
    NormalizedError,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::PctFlagged => "pct_flagged",
            Outcome::CorrectionError => "correction_error",
            Outcome::NormalizedError => "normalized_error",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pct_flagged" => Ok(Outcome::PctFlagged),
            "correction_error" => Ok(Outcome::CorrectionError),
            "normalized_error" => Ok(Outcome::NormalizedError),
            _ => Err(Error::InvalidArgument(format!(
                "unknown outcome `{s}` (pct_flagged, correction_error, normalized_error)"
            ))),
        }
    }
}

/// One observation of an outcome at an operational hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub op_hour: f64,
    pub y: f64,
    /// Used only by weighted fits.
    pub weight: f64,
    /// Sensor cluster index, used only by cluster-robust fits.
    pub cluster: usize,
}

impl TrendPoint {
    pub fn new(op_hour: f64, y: f64) -> Self {
        TrendPoint {
            op_hour,
            y,
            weight: 1.0,
            cluster: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendOptions {
    /// Weighted least squares with `TrendPoint::weight`.
    pub weighted: bool,
    /// CR1 cluster-robust standard errors over `TrendPoint::cluster`.
    pub cluster_robust: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub outcome: Outcome,
    pub stratum: String,
    pub intercept: f64,
    pub slope_per_hour: f64,
    pub slope_per_year: f64,
    pub se_per_hour: f64,
    pub ci_lower_per_hour: f64,
    pub ci_upper_per_hour: f64,
    pub ci_lower_per_year: f64,
    pub ci_upper_per_year: f64,
    pub p_value: f64,
    pub n: usize,
    pub weighted: bool,
    pub cluster_robust: bool,
}

fn hour_design(points: &[TrendPoint]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { 1.0 } else { points[i].op_hour })
}

fn fit_design(
    y: &[f64],
    x: &DMatrix<f64>,
    names: &[String],
    points: &[TrendPoint],
    opts: &TrendOptions,
) -> Result<OlsResult> {
    let res = if opts.weighted {
        let w: Vec<f64> = points.iter().map(|p| p.weight).collect();
        wls(y, x, &w, names)?
    } else {
        ols(y, x, names)?
    };
    if !opts.cluster_robust {
        return Ok(res);
    }
    let clusters: Vec<usize> = points.iter().map(|p| p.cluster).collect();
    if opts.weighted {
        let mut xw = x.clone();
        for (i, p) in points.iter().enumerate() {
            xw.row_mut(i).scale_mut(p.weight.sqrt());
        }
        res.cluster_robust(&xw, &clusters)
    } else {
        res.cluster_robust(x, &clusters)
    }
}

/// `outcome = f + d · op_hour + ε` by least squares, with a 95% t interval on `d`.
pub fn linear_trend(outcome: Outcome, stratum: &str, points: &[TrendPoint], opts: &TrendOptions) -> Result<TrendFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "trend fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let first = points[0].op_hour;
    if points.iter().all(|p| p.op_hour == first) {
        return Err(Error::InvalidArgument("op_hour is constant; slope undefined".into()));
    }
    let y: Vec<f64> = points.iter().map(|p| p.y).collect();
    let names = ["(Intercept)".to_string(), "op_hour".to_string()];
    let res = fit_design(&y, &hour_design(points), &names, points, opts)?;
    let d = res.coefficients[1];
    Ok(TrendFit {
        outcome,
        stratum: stratum.to_string(),
        intercept: res.coefficients[0],
        slope_per_hour: d,
        slope_per_year: d * HOURS_PER_YEAR,
        se_per_hour: res.std_errors[1],
        ci_lower_per_hour: res.ci_lower[1],
        ci_upper_per_hour: res.ci_upper[1],
        ci_lower_per_year: res.ci_lower[1] * HOURS_PER_YEAR,
        ci_upper_per_year: res.ci_upper[1] * HOURS_PER_YEAR,
        p_value: res.p_values[1],
        n: points.len(),
        weighted: opts.weighted,
        cluster_robust: opts.cluster_robust,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumFit {
    pub stratum: String,
    pub n: usize,
    /// `None` when the stratum is too small or degenerate.
    pub fit: Option<TrendFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedTrends {
    pub outcome: Outcome,
    pub strata: Vec<StratumFit>,
    /// F test of stratum × op_hour terms in a pooled model over the strata
    /// that could be fitted; `None` with fewer than two such strata.
    pub interaction: Option<FTest>,
}

/// Independent fit per stratum plus an effect-modification test.
pub fn stratified_trends(
    outcome: Outcome,
    points: &[TrendPoint],
    labels: &[String],
    opts: &TrendOptions,
) -> Result<StratifiedTrends> {
    if labels.len() != points.len() {
        return Err(Error::InvalidArgument("stratum labels must align with points".into()));
    }
    let mut groups: BTreeMap<&str, Vec<TrendPoint>> = BTreeMap::new();
    for (p, l) in points.iter().zip(labels) {
        groups.entry(l.as_str()).or_default().push(*p);
    }
    let mut strata = Vec::with_capacity(groups.len());
    let mut usable: Vec<&str> = Vec::new();
    for (label, pts) in &groups {
        let fit = linear_trend(outcome, label, pts, opts);
        let ok = fit.is_ok();
        strata.push(StratumFit {
            stratum: label.to_string(),
            n: pts.len(),
            note: fit.as_ref().err().map(|e| e.to_string()),
            fit: fit.ok(),
        });
        if ok {
            usable.push(label);
        }
    }
    let interaction = if usable.len() >= 2 {
        interaction_f_test(&groups, &usable, opts).ok()
    } else {
        None
    };
    Ok(StratifiedTrends {
        outcome,
        strata,
        interaction,
    })
}

fn interaction_f_test(groups: &BTreeMap<&str, Vec<TrendPoint>>, usable: &[&str], opts: &TrendOptions) -> Result<FTest> {
    let pts: Vec<TrendPoint> = usable.iter().flat_map(|l| groups[l].iter().copied()).collect();
    let which: Vec<usize> = usable
        .iter()
        .enumerate()
        .flat_map(|(k, l)| std::iter::repeat_n(k, groups[l].len()))
        .collect();
    let s = usable.len();
    let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
    // Restricted: intercept, op_hour, stratum dummies. Full adds dummy × op_hour.
    let restricted = DMatrix::from_fn(pts.len(), s + 1, |i, j| match j {
        0 => 1.0,
        1 => pts[i].op_hour,
        _ => (which[i] == j - 1) as u8 as f64,
    });
    let full = DMatrix::from_fn(pts.len(), 2 * s, |i, j| {
        if j <= s {
            restricted[(i, j)]
        } else {
            restricted[(i, j - s + 1)] * pts[i].op_hour
        }
    });
    let names = |p: usize| (0..p).map(|j| format!("c{j}")).collect::<Vec<_>>();
    let plain = TrendOptions {
        cluster_robust: false,
        ..*opts
    };
    let r = fit_design(&y, &restricted, &names(s + 1), &pts, &plain)?;
    let f = fit_design(&y, &full, &names(2 * s), &pts, &plain)?;
    f_test_nested(&r, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_line() {
        let pts: Vec<_> = (0..50).map(|h| TrendPoint::new(h as f64 * 10.0, 2.0 + 0.001 * h as f64 * 10.0)).collect();
        let fit = linear_trend(Outcome::PctFlagged, "all", &pts, &TrendOptions::default()).unwrap();
        assert!((fit.slope_per_hour - 0.001).abs() < 1e-14);
        assert_eq!(fit.slope_per_year, fit.slope_per_hour * 8760.0);
        assert!((fit.ci_upper_per_hour - fit.ci_lower_per_hour).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let two = [TrendPoint::new(0.0, 1.0), TrendPoint::new(1.0, 2.0)];
        assert!(linear_trend(Outcome::PctFlagged, "all", &two, &TrendOptions::default()).is_err());
        let flat: Vec<_> = (0..5).map(|i| TrendPoint::new(7.0, i as f64)).collect();
        assert!(matches!(
            linear_trend(Outcome::PctFlagged, "all", &flat, &TrendOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn origin_shift_moves_only_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<_> = (0..200).map(|h| TrendPoint::new(h as f64, 0.01 * h as f64 + z.sample(&mut rng))).collect();
        let shifted: Vec<_> = pts.iter().map(|p| TrendPoint::new(p.op_hour + 1000.0, p.y)).collect();
        let a = linear_trend(Outcome::CorrectionError, "all", &pts, &TrendOptions::default()).unwrap();
        let b = linear_trend(Outcome::CorrectionError, "all", &shifted, &TrendOptions::default()).unwrap();
        assert!((a.slope_per_hour - b.slope_per_hour).abs() < 1e-10);
        assert!((a.intercept - (b.intercept + 1000.0 * b.slope_per_hour)).abs() < 1e-8);
        assert!((a.p_value - b.p_value).abs() < 1e-8);
    }

    #[test]
    fn null_trend_p_values_mostly_large() {
        let z = Normal::new(0.0, 1.0).unwrap();
        let mut large = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..300).map(|h| TrendPoint::new(h as f64, z.sample(&mut rng))).collect();
            let fit = linear_trend(Outcome::CorrectionError, "all", &pts, &TrendOptions::default()).unwrap();
            large += (fit.p_value > 0.05) as usize;
        }
        assert!(large >= 90, "{large}");
    }

    #[test]
    fn opposite_slopes_interact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = Normal::new(0.0, 1.0).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (label, slope) in [("a", 0.002), ("b", -0.002)] {
            for h in 0..2000 {
                pts.push(TrendPoint::new(h as f64, slope * h as f64 + z.sample(&mut rng)));
                labels.push(label.to_string());
            }
        }
        pts.push(TrendPoint::new(1.0, 0.0));
        pts.push(TrendPoint::new(2.0, 0.0));
        labels.push("tiny".into());
        labels.push("tiny".into());
        let st = stratified_trends(Outcome::CorrectionError, &pts, &labels, &TrendOptions::default()).unwrap();
        assert!(st.interaction.unwrap().p_value < 0.05);
        let tiny = st.strata.iter().find(|s| s.stratum == "tiny").unwrap();
        assert!(tiny.fit.is_none() && tiny.note.is_some());
    }

    #[test]
    fn single_stratum_reduces_to_linear_trend() {
        let pts: Vec<_> = (0..30).map(|h| TrendPoint::new(h as f64, (h * h % 7) as f64)).collect();
        let labels = vec!["only".to_string(); 30];
        let st = stratified_trends(Outcome::PctFlagged, &pts, &labels, &TrendOptions::default()).unwrap();
        let direct = linear_trend(Outcome::PctFlagged, "only", &pts, &TrendOptions::default()).unwrap();
        assert_eq!(st.strata[0].fit.as_ref().unwrap(), &direct);
        assert!(st.interaction.is_none());
    }

    #[test]
    fn weighted_and_robust_variants_run() {
        let pts: Vec<_> = (0..100)
            .map(|h| TrendPoint {
                op_hour: h as f64,
                y: 0.5 * h as f64 + ((h * 37) % 11) as f64,
                weight: 1.0 + (h % 4) as f64,
                cluster: h % 10,
            })
            .collect();
        for opts in [
            TrendOptions { weighted: true, cluster_robust: false },
            TrendOptions { weighted: false, cluster_robust: true },
            TrendOptions { weighted: true, cluster_robust: true },
        ] {
            let fit = linear_trend(Outcome::PctFlagged, "all", &pts, &opts).unwrap();
            assert!((fit.slope_per_hour - 0.5).abs() < 0.1);
            assert!(fit.ci_lower_per_hour < fit.slope_per_hour && fit.slope_per_hour < fit.ci_upper_per_hour);
        }
    }
}
