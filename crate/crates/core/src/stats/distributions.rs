//! Student t, Fisher F and standard normal distribution functions.

use std::f64::consts::{PI, SQRT_2};

use super::special::{ln_gamma_ratio, reg_inc_beta_xy, reg_inc_gamma_upper};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    // Φ(z) = ½ erfc(-z/√2) and erfc(u) = Q(½, u²) for u ≥ 0
    let half_tail = 0.5 * reg_inc_gamma_upper(0.5, z * z / 2.0);
    if z >= 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

/// Two-sided standard normal tail probability `P(|Z| > |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    let u = z.abs() / SQRT_2;
    reg_inc_gamma_upper(0.5, u * u)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Student t CDF with `df > 0` degrees of freedom (`df = ∞` gives the normal).
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if df.is_infinite() {
        return normal_cdf(t);
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * t_two_sided_p(t, df);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value `P(|T| > |t|)` for the t distribution.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return normal_two_sided(t);
    }
    if t.is_infinite() {
        return 0.0;
    }
    if df >= LARGE_DF {
        return hill_two_sided(t, df);
    }
    let t2 = t * t;
    let denom = df + t2;
    let x = df / denom;
    let y = t2 / denom;
    reg_inc_beta_xy(df / 2.0, 0.5, x, y).clamp(0.0, 1.0)
}

/// Above this many degrees of freedom the incomplete-beta route loses
/// digits to rounding that grows with `df`, while the asymptotic transform
/// below has error of order `df^-3`.
const LARGE_DF: f64 = 1e5;

// Hill (1970) normalizing transform of t to a standard normal deviate.
fn hill_two_sided(t: f64, df: f64) -> f64 {
    let a = df - 0.5;
    let b = 48.0 * a * a;
    let y = a * (t * t / df).ln_1p();
    let z = (((((-0.4 * y - 3.3) * y - 24.0) * y - 85.5) / (0.8 * y * y + 100.0 + b) + y + 3.0) / b + 1.0)
        * y.sqrt();
    normal_two_sided(z)
}

/// Student t density.
pub fn t_pdf(t: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return normal_pdf(t);
    }
    let ln_norm = ln_gamma_ratio(df / 2.0, 0.5) - 0.5 * (df * PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (t * t / df).ln_1p()).exp()
}

/// Quantile (inverse CDF) of the t distribution for `p` in `(0, 1)`.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    // Bracket, then safeguarded Newton on the upper-tail equation.
    let target_tail = 1.0 - p;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while 0.5 * t_two_sided_p(hi, df) > target_tail {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = 0.5 * t_two_sided_p(x, df) - target_tail;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let deriv = -t_pdf(x, df);
        let mut next = if deriv != 0.0 { x - f / deriv } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Upper-tail probability `P(F > f)` for the F distribution with `(d1, d2)` df.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() || d1 <= 0.0 || d2 <= 0.0 {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let denom = d1 * f + d2;
    // P(F > f) = I_{d2/(d1 f + d2)}(d2/2, d1/2)
    reg_inc_beta_xy(d2 / 2.0, d1 / 2.0, d2 / denom, d1 * f / denom).clamp(0.0, 1.0)
}
