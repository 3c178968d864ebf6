//! Cluster bootstrap for pointwise confidence bands.
//!
//! Each replicate draws `m` whole clusters (sensors) with replacement using
//! its own ChaCha8 stream derived from the master seed, so results do not
//! depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pspline::{fit_pspline_gam, GamConfig, GamFit};
use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Share of failed replicates above which a warning is attached to the bands.
pub const DROP_WARNING_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Clusters per replicate; `None` draws as many as there are.
    pub m: Option<usize>,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 100,
            m: None,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
    pub m: usize,
    pub seed: u64,
    pub n_ok: usize,
    pub n_dropped: usize,
    pub warning: Option<String>,
}

/// Cluster indices drawn for replicate `rep`.
pub fn replicate_draw(seed: u64, rep: u64, n_clusters: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    (0..m).map(|_| rng.random_range(0..n_clusters)).collect()
}

/// Runs `fit` on each resampled set of clusters and returns the 2.5 and
/// 97.5 percentiles of the fitted values at every output point. Replicates
/// whose fit fails, or returns the wrong number of points, are dropped.
pub fn cluster_bootstrap_bands<C, F>(clusters: &[C], config: &BootstrapConfig, fit: F) -> Result<BootstrapBands>
where
    C: Sync,
    F: Fn(&[&C]) -> Result<Vec<f64>> + Sync,
{
    if clusters.is_empty() {
        return Err(Error::InsufficientData("bootstrap needs at least one cluster".into()));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("bootstrap replicates must be positive".into()));
    }
    let m = config.m.unwrap_or(clusters.len());
    if m == 0 {
        return Err(Error::InvalidArgument("bootstrap m must be positive".into()));
    }
    let results: Vec<Option<Vec<f64>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let draw = replicate_draw(config.seed, rep, clusters.len(), m);
            let sample: Vec<&C> = draw.iter().map(|&i| &clusters[i]).collect();
            match fit(&sample) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("bootstrap replicate {rep} dropped: {e}");
                    None
                }
            }
        })
        .collect();

    let width = results
        .iter()
        .flatten()
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::InsufficientData("every bootstrap replicate failed".into()))?;
    let ok: Vec<&Vec<f64>> = results.iter().flatten().filter(|v| v.len() == width).collect();
    let n_ok = ok.len();
    let n_dropped = config.replicates - n_ok;

    let mut lower = Vec::with_capacity(width);
    let mut upper = Vec::with_capacity(width);
    let mut column = Vec::with_capacity(n_ok);
    for j in 0..width {
        column.clear();
        column.extend(ok.iter().map(|v| v[j]));
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, 0.025));
        upper.push(quantile_sorted(&column, 0.975));
    }

    let warning = (n_dropped as f64 > DROP_WARNING_FRACTION * config.replicates as f64).then(|| {
        let msg = format!(
            "{n_dropped} of {} bootstrap replicates failed; bands rest on {n_ok}",
            config.replicates
        );
        log::warn!("{msg}");
        msg
    });

    Ok(BootstrapBands {
        lower,
        upper,
        replicates: config.replicates,
        m,
        seed: config.seed,
        n_ok,
        n_dropped,
        warning,
    })
}

/// Fits a GAM to the pooled `(x, y)` points and attaches cluster-bootstrap
/// bands. Replicates reuse the full-data domain and the same λ grid.
pub fn bootstrap_gam(clusters: &[Vec<(f64, f64)>], gam: &GamConfig, boot: &BootstrapConfig) -> Result<GamFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = clusters.iter().flatten().copied().unzip();
    let mut fit = fit_pspline_gam(&x, &y, gam)?;
    let domain = (fit.grid[0], *fit.grid.last().expect("grid is non-empty"));
    let replicate_config = GamConfig {
        domain: Some(domain),
        ..gam.clone()
    };
    let bands = cluster_bootstrap_bands(clusters, boot, |sample| {
        let (x, y): (Vec<f64>, Vec<f64>) = sample.iter().flat_map(|c| c.iter().copied()).unzip();
        Ok(fit_pspline_gam(&x, &y, &replicate_config)?.curve)
    })?;
    fit.bands = Some(bands);
    Ok(fit)
}
