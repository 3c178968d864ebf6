//! Cubic P-splines with a second-order difference penalty and GCV smoothing
//! selection.
//!
//! The penalty is rescaled by `tr(BᵀB) / tr(DᵀD)` before λ is applied, so a
//! given λ means the same amount of smoothing whatever the sample size.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEGREE: usize = 3;
pub const PENALTY_ORDER: usize = 2;

/// `K` cubic B-splines on equally spaced knots over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsplineBasis {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
    /// `K + 4` knots; the interior ones split `[lo, hi]` into `K − 3` segments.
    pub knots: Vec<f64>,
}

impl PsplineBasis {
    pub fn new(k: usize, lo: f64, hi: f64) -> Result<Self> {
        if k < DEGREE + 1 {
            return Err(Error::InvalidArgument(format!("basis size {k} below the minimum of 4")));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("degenerate spline domain [{lo}, {hi}]")));
        }
        let nseg = k - DEGREE;
        let h = (hi - lo) / nseg as f64;
        let knots = (0..k + DEGREE + 1)
            .map(|j| lo + (j as f64 - DEGREE as f64) * h)
            .collect();
        Ok(PsplineBasis { k, lo, hi, knots })
    }

    fn segment_width(&self) -> f64 {
        (self.hi - self.lo) / (self.k - DEGREE) as f64
    }

    /// Index of the first non-zero basis function at `x` and the four values.
    pub fn eval(&self, x: f64) -> (usize, [f64; 4]) {
        let nseg = self.k - DEGREE;
        let s = (((x - self.lo) / self.segment_width()).floor().max(0.0) as usize).min(nseg - 1);
        let span = s + DEGREE;
        let t = &self.knots;
        let mut n = [0.0; 4];
        let mut left = [0.0; 4];
        let mut right = [0.0; 4];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (s, n)
    }

    /// Dense `n × K` basis matrix; for diagnostics and tests.
    pub fn dense(&self, x: &[f64]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(x.len(), self.k);
        for (i, xi) in x.iter().enumerate() {
            let (s, v) = self.eval(*xi);
            for (j, vj) in v.iter().enumerate() {
                b[(i, s + j)] = *vj;
            }
        }
        b
    }

    /// `DᵀD` for the second-difference operator `D`.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.k;
        let mut d = DMatrix::zeros(k - 2, k);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -2.0;
            d[(i, i + 2)] = 1.0;
        }
        d.transpose() * d
    }
}

/// Sufficient statistics of a penalized B-spline regression.
#[derive(Debug, Clone)]
pub struct PenalizedSystem {
    pub basis: PsplineBasis,
    rows: Vec<(usize, [f64; 4])>,
    y: Vec<f64>,
    gram: DMatrix<f64>,
    bty: DVector<f64>,
    penalty: DMatrix<f64>,
    pub penalty_scale: f64,
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub lambda: f64,
    pub coefficients: DVector<f64>,
    pub rss: f64,
    /// `tr((G + λP)⁻¹ G)`.
    pub edf: f64,
}

impl PenalizedSystem {
    pub fn new(basis: PsplineBasis, x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("x and y lengths differ".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in spline input".into()));
        }
        let k = basis.k;
        let mut gram = DMatrix::zeros(k, k);
        let mut bty = DVector::zeros(k);
        let mut rows = Vec::with_capacity(x.len());
        for (xi, yi) in x.iter().zip(y) {
            let (s, v) = basis.eval(*xi);
            for a in 0..4 {
                bty[s + a] += v[a] * yi;
                for b in 0..4 {
                    gram[(s + a, s + b)] += v[a] * v[b];
                }
            }
            rows.push((s, v));
        }
        let penalty = basis.penalty();
        let penalty_scale = gram.trace() / penalty.trace();
        Ok(PenalizedSystem {
            basis,
            rows,
            y: y.to_vec(),
            gram,
            bty,
            penalty,
            penalty_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn factor(&self, lambda: f64) -> Result<Cholesky<f64, Dyn>> {
        let a = &self.gram + &self.penalty * (lambda * self.penalty_scale);
        Cholesky::new(a).ok_or_else(|| {
            Error::InsufficientData(format!(
                "penalized normal matrix is singular at lambda = {lambda}; too few distinct x values for the basis"
            ))
        })
    }

    fn predict_row(&self, i: usize, coef: &DVector<f64>) -> f64 {
        let (s, v) = self.rows[i];
        v.iter().enumerate().map(|(a, b)| b * coef[s + a]).sum()
    }

    pub fn solve(&self, lambda: f64) -> Result<PenalizedSolution> {
        let chol = self.factor(lambda)?;
        let coefficients = chol.solve(&self.bty);
        let rss = (0..self.n())
            .map(|i| {
                let e = self.y[i] - self.predict_row(i, &coefficients);
                e * e
            })
            .sum();
        let edf = chol.solve(&self.gram).trace();
        Ok(PenalizedSolution {
            lambda,
            coefficients,
            rss,
            edf,
        })
    }

    /// `Σ_i b_iᵀ (G + λP)⁻¹ b_i`, the hat trace as a sum of leverages.
    pub fn leverage_sum(&self, lambda: f64) -> Result<f64> {
        let inv = self.factor(lambda)?.inverse();
        Ok(self
            .rows
            .iter()
            .map(|(s, v)| {
                let mut h = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        h += v[a] * inv[(s + a, s + b)] * v[b];
                    }
                }
                h
            })
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcvPoint {
    pub lambda: f64,
    /// `None` when `tr(H) ≥ n` or the system is singular.
    pub gcv: Option<f64>,
    pub edf: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GcvSelection {
    pub best: PenalizedSolution,
    pub gcv: f64,
    pub curve: Vec<GcvPoint>,
}

/// Minimizes `n·RSS / (n − tr H)²` over `lambdas`. Scores within a tiny
/// tolerance of the minimum count as tied, and ties go to the larger λ.
pub fn gcv_select(system: &PenalizedSystem, lambdas: &[f64]) -> Result<GcvSelection> {
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("GCV grid needs at least two positive lambdas".into()));
    }
    let n = system.n() as f64;
    let mut solutions = Vec::with_capacity(lambdas.len());
    let mut curve = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let sol = system.solve(lambda).ok().filter(|s| s.edf < n);
        let gcv = sol.as_ref().map(|s| n * s.rss / (n - s.edf).powi(2));
        curve.push(GcvPoint {
            lambda,
            gcv,
            edf: sol.as_ref().map(|s| s.edf),
        });
        solutions.push(sol);
    }
    let min = curve
        .iter()
        .filter_map(|p| p.gcv)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InsufficientData("no lambda on the grid gives a defined GCV score".into()))?;
    let ybar = system.y.iter().sum::<f64>() / n;
    let spread = system.y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / n;
    let ymax = system.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // Residuals below ~1e-10 of the data scale are solver roundoff, which
    // grows with λ through the conditioning of G + λP.
    let roundoff = 1e-20 * ymax * ymax;
    let tol = 1e-10 * spread + 1e-9 * min.abs() + roundoff;
    let best = (0..curve.len())
        .filter(|&i| curve[i].gcv.is_some_and(|g| g <= min + tol))
        .max_by(|&a, &b| curve[a].lambda.total_cmp(&curve[b].lambda))
        .expect("minimum is attained");
    Ok(GcvSelection {
        gcv: curve[best].gcv.expect("defined"),
        best: solutions[best].take().expect("defined"),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamConfig {
    pub k: usize,
    pub n_lambda: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid_points: usize,
    /// Spline domain; defaults to the range of `x`. Bootstrap replicates
    /// share the full-data domain so their curves align.
    pub domain: Option<(f64, f64)>,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            k: 20,
            n_lambda: 50,
            lambda_min: 1e-6,
            lambda_max: 1e6,
            grid_points: 200,
            domain: None,
        }
    }
}

impl GamConfig {
    pub fn lambda_grid(&self) -> Vec<f64> {
        let (a, b) = (self.lambda_min.log10(), self.lambda_max.log10());
        let m = self.n_lambda.max(2);
        (0..m).map(|i| 10f64.powf(a + (b - a) * i as f64 / (m - 1) as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamFit {
    pub degree: usize,
    pub k: usize,
    pub knots: Vec<f64>,
    pub penalty_order: usize,
    pub penalty_scale: f64,
    pub lambda: f64,
    pub edf: f64,
    pub gcv: f64,
    pub gcv_curve: Vec<GcvPoint>,
    pub coefficients: Vec<f64>,
    pub n: usize,
    pub grid: Vec<f64>,
    pub curve: Vec<f64>,
    pub bands: Option<super::BootstrapBands>,
}

impl GamFit {
    pub fn basis(&self) -> PsplineBasis {
        let lo = self.knots[DEGREE];
        let hi = self.knots[self.knots.len() - 1 - DEGREE];
        PsplineBasis {
            k: self.k,
            lo,
            hi,
            knots: self.knots.clone(),
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let (s, v) = self.basis().eval(x);
        v.iter().enumerate().map(|(a, b)| b * self.coefficients[s + a]).sum()
    }
}

pub fn fit_pspline_gam(x: &[f64], y: &[f64], config: &GamConfig) -> Result<GamFit> {
    let n = x.len();
    if n <= config.k {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot support {} basis functions; use a smaller K",
            config.k
        )));
    }
    let (lo, hi) = match config.domain {
        Some(d) => d,
        None => x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v))),
    };
    let basis = PsplineBasis::new(config.k, lo, hi)?;
    let system = PenalizedSystem::new(basis, x, y)?;
    let sel = gcv_select(&system, &config.lambda_grid())?;
    let m = config.grid_points.max(2);
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let coef = &sel.best.coefficients;
    let curve = grid
        .iter()
        .map(|g| {
            let (s, v) = system.basis.eval(*g);
            v.iter().enumerate().map(|(a, b)| b * coef[s + a]).sum()
        })
        .collect();
    Ok(GamFit {
        degree: DEGREE,
        k: config.k,
        knots: system.basis.knots.clone(),
        penalty_order: PENALTY_ORDER,
        penalty_scale: system.penalty_scale,
        lambda: sel.best.lambda,
        edf: sel.best.edf,
        gcv: sel.gcv,
        gcv_curve: sel.curve,
        coefficients: coef.iter().copied().collect(),
        n,
        grid,
        curve,
        bands: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ols;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn uniform_x(n: usize, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.0..hi)).collect()
    }

    #[test]
    fn basis_is_partition_of_unity() {
        let b = PsplineBasis::new(20, -3.0, 17.0).unwrap();
        assert_eq!(b.knots.len(), 24);
        for i in 0..=400 {
            let x = -3.0 + 20.0 * i as f64 / 400.0;
            let (s, v) = b.eval(x);
            assert!(s + 3 < 20);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13, "x={x}");
            assert!(v.iter().all(|w| *w >= -1e-15));
        }
    }

    #[test]
    fn exact_line_reproduced_with_large_lambda() {
        let x = uniform_x(500, 35_000.0, 1);
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2e-4 * v).collect();
        let fit = fit_pspline_gam(&x, &y, &GamConfig::default()).unwrap();
        for (g, c) in fit.grid.iter().zip(&fit.curve) {
            let truth = 3.0 - 2e-4 * g;
            assert!((c - truth).abs() <= 1e-6 * truth.abs().max(1.0), "{g}: {c} vs {truth}");
        }
        assert_eq!(fit.lambda, *GamConfig::default().lambda_grid().last().unwrap());
        assert!(fit.edf <= 2.5, "edf {}", fit.edf);
    }

    #[test]
    fn constant_input_gives_constant_curve() {
        let x = uniform_x(200, 10.0, 2);
        let fit = fit_pspline_gam(&x, &vec![4.2; 200], &GamConfig::default()).unwrap();
        assert!(fit.curve.iter().all(|c| (c - 4.2).abs() < 1e-9));
        assert!(fit.edf >= 1.0 && fit.edf <= 2.5);
    }

    #[test]
    fn hat_trace_two_ways() {
        let x = uniform_x(300, 1.0, 3);
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let sys = PenalizedSystem::new(PsplineBasis::new(20, 0.0, 1.0).unwrap(), &x, &y).unwrap();
        for lambda in [1e-6, 1e-2, 1.0, 1e3, 1e6] {
            let direct = sys.solve(lambda).unwrap().edf;
            let lev = sys.leverage_sum(lambda).unwrap();
            assert!(((direct - lev) / direct).abs() < 1e-8, "λ={lambda}: {direct} vs {lev}");
            assert!((2.0 - 1e-6..=20.0 + 1e-6).contains(&direct));
        }
    }

    #[test]
    fn zero_lambda_is_unpenalized_regression() {
        let x = uniform_x(400, 5.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<f64> = x.iter().map(|v| v.cos() + rng.random_range(-0.1..0.1)).collect();
        let basis = PsplineBasis::new(12, 0.0, 5.0).unwrap();
        let sys = PenalizedSystem::new(basis.clone(), &x, &y).unwrap();
        let sol = sys.solve(0.0).unwrap();
        let names: Vec<String> = (0..12).map(|j| format!("b{j}")).collect();
        let reg = ols(&y, &basis.dense(&x), &names).unwrap();
        for (a, b) in sol.coefficients.iter().zip(&reg.coefficients) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!((sol.edf - 12.0).abs() < 1e-8);
    }

    #[test]
    fn sine_recovered_within_noise_envelope() {
        let sigma = 0.05;
        let x = uniform_x(2000, 35_000.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = Normal::new(0.0, sigma).unwrap();
        let y: Vec<f64> = x.iter().map(|v| (v / 5000.0).sin() + z.sample(&mut rng)).collect();
        let fit = fit_pspline_gam(&x, &y, &GamConfig::default()).unwrap();
        let worst = fit
            .grid
            .iter()
            .zip(&fit.curve)
            .map(|(g, c)| (c - (g / 5000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 3.0 * sigma, "max deviation {worst}");
    }

    #[test]
    fn white_noise_selects_near_minimal_df() {
        let x = uniform_x(1000, 100.0, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<f64> = x.iter().map(|_| z.sample(&mut rng)).collect();
        let fit = fit_pspline_gam(&x, &y, &GamConfig::default()).unwrap();
        let min_df = fit.gcv_curve.iter().filter_map(|p| p.edf).fold(f64::INFINITY, f64::min);
        assert!(fit.edf < min_df + 2.0, "{} vs {}", fit.edf, min_df);
        assert!(fit.gcv_curve.iter().all(|p| p.gcv.is_some_and(f64::is_finite)));
    }

    #[test]
    fn affine_rescaling_of_x_leaves_fit_unchanged() {
        let x = uniform_x(300, 10.0, 9);
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + 0.1 * v).collect();
        let a = fit_pspline_gam(&x, &y, &GamConfig::default()).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v + 100.0).collect();
        let b = fit_pspline_gam(&x2, &y, &GamConfig::default()).unwrap();
        assert_eq!(a.lambda, b.lambda);
        for (ca, cb) in a.curve.iter().zip(&b.curve) {
            assert!((ca - cb).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let err = fit_pspline_gam(&x, &x, &GamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("smaller K"));
        assert!(gcv_select(
            &PenalizedSystem::new(PsplineBasis::new(5, 0.0, 19.0).unwrap(), &x, &x).unwrap(),
            &[1.0]
        )
        .is_err());
    }
}
