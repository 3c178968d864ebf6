//! Statistical primitives shared by every analytics module.

mod descriptive;
mod distributions;
mod ols;
pub mod special;

pub use descriptive::{
    mean, pearson_r, quantile, quantile_sorted, sample_std, sample_variance, welch_t, Summary,
    WelchTest,
};
pub use distributions::{
    f_upper_tail, normal_cdf, normal_pdf, normal_two_sided, t_cdf, t_pdf, t_quantile,
    t_two_sided_p,
};
pub use ols::{design_from_columns, f_test_nested, ols, wls, FTest, OlsResult};

/// Student t CDF (alias kept for readability at call sites).
pub fn t_distribution_cdf(t: f64, df: f64) -> f64 {
    t_cdf(t, df)
}
