use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::distributions::{f_upper_tail, t_quantile, t_two_sided_p};
use crate::{Error, Result};

/// Relative singular-value cutoff (on unit-norm columns) below which the
/// design is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Classical least-squares fit with inference.
#[derive(Debug, Clone, Serialize)]
pub struct OlsResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub r_squared: f64,
    pub n: usize,
    pub rank: usize,
    /// Degrees of freedom behind the t quantiles and p-values.
    pub df: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    /// `(XᵀX)⁻¹`.
    #[serde(skip)]
    pub cov_unscaled: DMatrix<f64>,
}

impl OlsResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    pub fn residual_variance(&self) -> f64 {
        self.rss / (self.n - self.rank) as f64
    }

    /// Recomputes standard errors, tests and CIs with the CR1 cluster-robust
    /// sandwich estimator; the t reference uses `G - 1` degrees of freedom.
    pub fn cluster_robust(&self, x: &DMatrix<f64>, clusters: &[usize]) -> Result<OlsResult> {
        let (n, p) = x.shape();
        if clusters.len() != n || self.residuals.len() != n {
            return Err(Error::InvalidArgument(
                "cluster labels must align with design rows".into(),
            ));
        }
        let mut scores: std::collections::BTreeMap<usize, DVector<f64>> = Default::default();
        for (i, &g) in clusters.iter().enumerate() {
            let e = self.residuals[i];
            let s = scores.entry(g).or_insert_with(|| DVector::zeros(p));
            for j in 0..p {
                s[j] += x[(i, j)] * e;
            }
        }
        let groups = scores.len();
        if groups < 2 {
            return Err(Error::InsufficientData(
                "cluster-robust errors need at least two clusters".into(),
            ));
        }
        let mut meat = DMatrix::<f64>::zeros(p, p);
        for s in scores.values() {
            meat += s * s.transpose();
        }
        let g = groups as f64;
        let scale = g / (g - 1.0) * (n as f64 - 1.0) / (n - p) as f64;
        let cov = (&self.cov_unscaled * meat * &self.cov_unscaled) * scale;
        let mut out = self.clone();
        let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
        out.fill_inference(se, g - 1.0);
        Ok(out)
    }

    fn fill_inference(&mut self, std_errors: Vec<f64>, df: f64) {
        let tq = t_quantile(0.975, df);
        self.t_stats = self
            .coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, se)| if *se > 0.0 { b / se } else { f64::NAN })
            .collect();
        // An exact fit is significant unless the estimate itself is zero.
        self.p_values = self
            .t_stats
            .iter()
            .zip(self.coefficients.iter().zip(&std_errors))
            .map(|(t, (b, se))| match (*se > 0.0, *b == 0.0) {
                (true, _) => t_two_sided_p(*t, df),
                (false, false) => 0.0,
                (false, true) => 1.0,
            })
            .collect();
        self.ci_lower = self
            .coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, se)| b - tq * se)
            .collect();
        self.ci_upper = self
            .coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, se)| b + tq * se)
            .collect();
        self.std_errors = std_errors;
        self.df = df;
    }
}

/// Builds a column-major design matrix from column vectors.
pub fn design_from_columns(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

/// Ordinary least squares via Householder QR of the column-equilibrated
/// design, with classical (homoskedastic) inference.
pub fn ols(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<OlsResult> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} term names for {p} design columns",
            names.len()
        )));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("design has no columns".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in regression input".into()));
    }

    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let zero_cols: Vec<String> = norms
        .iter()
        .zip(names)
        .filter(|(c, _)| **c == 0.0)
        .map(|(_, name)| name.clone())
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::RankDeficient {
            rank: p - zero_cols.len(),
            columns: p,
            terms: zero_cols,
        });
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot support {p} coefficients with residual degrees of freedom"
        )));
    }

    let mut scaled = x.clone();
    for (j, c) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*c);
    }
    let qr = scaled.qr();
    let r = qr.r();

    let svd = r.clone().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > RANK_TOL * smax).count();
    if rank < p {
        let v_t = svd.v_t.as_ref().expect("requested V");
        let mut terms = std::collections::BTreeSet::new();
        for (k, s) in sv.iter().enumerate() {
            if *s <= RANK_TOL * smax {
                for j in 0..p {
                    if v_t[(k, j)].abs() >= 0.05 {
                        terms.insert(j);
                    }
                }
            }
        }
        return Err(Error::RankDeficient {
            rank,
            columns: p,
            terms: terms.into_iter().map(|j| names[j].clone()).collect(),
        });
    }

    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let qty_head = qty.rows(0, p).into_owned();
    let beta_scaled = r
        .solve_upper_triangular(&qty_head)
        .ok_or_else(|| Error::Malformed("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Malformed("triangular inverse failed".into()))?;
    let coefficients: Vec<f64> = (0..p).map(|j| beta_scaled[j] / norms[j]).collect();

    let cov_scaled = &r_inv * r_inv.transpose();
    let cov_unscaled = DMatrix::from_fn(p, p, |i, j| cov_scaled[(i, j)] / (norms[i] * norms[j]));

    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let mut fit = 0.0;
        for j in 0..p {
            fit += x[(i, j)] * coefficients[j];
        }
        residuals.push(y[i] - fit);
    }
    let rss: f64 = residuals.iter().map(|e| e * e).sum();

    let has_intercept = (0..p).any(|j| {
        let c = x.column(j);
        let first = c[0];
        first != 0.0 && c.iter().all(|v| *v == first)
    });
    let tss: f64 = if has_intercept {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };

    let df = (n - p) as f64;
    let sigma2 = rss / df;
    let std_errors: Vec<f64> = (0..p)
        .map(|j| (sigma2 * cov_unscaled[(j, j)]).max(0.0).sqrt())
        .collect();

    let mut out = OlsResult {
        names: names.to_vec(),
        coefficients,
        std_errors: Vec::new(),
        t_stats: Vec::new(),
        p_values: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
        rss,
        tss,
        r_squared,
        n,
        rank,
        df,
        residuals,
        cov_unscaled,
    };
    out.fill_inference(std_errors, df);
    Ok(out)
}

/// Weighted least squares: OLS on rows scaled by `sqrt(w)`. Residuals and
/// RSS in the result are on the weighted scale.
pub fn wls(y: &[f64], x: &DMatrix<f64>, weights: &[f64], names: &[String]) -> Result<OlsResult> {
    if weights.len() != y.len() {
        return Err(Error::InvalidArgument("weights must align with rows".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let yw: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let mut xw = x.clone();
    for (i, s) in sw.iter().enumerate() {
        xw.row_mut(i).scale_mut(*s);
    }
    ols(&yw, &xw, names)
}

/// Nested-model F test of `full` against `restricted` (same rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FTest {
    pub f: f64,
    pub df_num: f64,
    pub df_den: f64,
    pub p_value: f64,
}

pub fn f_test_nested(restricted: &OlsResult, full: &OlsResult) -> Result<FTest> {
    if restricted.n != full.n || restricted.rank >= full.rank {
        return Err(Error::InvalidArgument(
            "F test needs a restricted model nested in the full one on the same rows".into(),
        ));
    }
    let df_num = (full.rank - restricted.rank) as f64;
    let df_den = (full.n - full.rank) as f64;
    let f = ((restricted.rss - full.rss).max(0.0) / df_num) / (full.rss / df_den);
    let p_value = if full.rss == 0.0 {
        if restricted.rss > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        f_upper_tail(f, df_num, df_den)
    };
    Ok(FTest { f, df_num, df_den, p_value })
}
