//! Nonparametric bootstrap of the whole impute, fit and estimate pipeline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_effect, Estimand, EffectEstimate, Method, PoolingScale};
use crate::formula::ModelSpec;
use crate::imputation::{impute, DEFAULT_M};
use crate::seed;
use crate::selection::{evaluate_pool, imputation_seed, select_best, CandidatePool, EvalConfig};

/// Default number of bootstrap resamples.
pub const DEFAULT_B: usize = 2000;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub m: usize,
    pub method: Method,
    pub estimand: Option<Estimand>,
    pub scale: PoolingScale,
    pub ci_level: f64,
    pub master_seed: u64,
    /// Re-run model selection on every resample with this pool and settings.
    pub reselect: Option<(CandidatePool, EvalConfig)>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: DEFAULT_B,
            m: DEFAULT_M,
            method: Method::Ipw,
            estimand: None,
            scale: PoolingScale::Log,
            ci_level: 0.95,
            master_seed: 0,
            reselect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub bse: f64,
    pub ci_normal: (f64, f64),
    pub ci_percentile: (f64, f64),
    pub ci_level: f64,
    /// Requested resamples.
    pub b: usize,
    pub b_effective: usize,
    pub failed: usize,
    /// Successful replicate estimates in resample order.
    pub replicates: Vec<f64>,
}

/// Two-sided standard normal quantile; exactly 1.96 at the 95% level.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} must lie in (0, 1)")));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(1.96);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// `(lo, hi)` as the `ceil(a B)`-th and `ceil((1 - a) B)`-th order statistics,
/// `a = (1 - level) / 2`, 1-based.
pub fn percentile_interval(replicates: &[f64], level: f64) -> Result<(f64, f64)> {
    if replicates.is_empty() {
        return Err(Error::InvalidArgument("no replicates".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} must lie in (0, 1)")));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    let a = (1.0 - level) / 2.0;
    // The tolerance keeps products such as 0.025 * 2000 from rounding up a rank.
    let rank = |p: f64| ((p * b - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok((sorted[rank(a) - 1], sorted[rank(1.0 - a) - 1]))
}

pub fn normal_interval(point: f64, bse: f64, level: f64) -> Result<(f64, f64)> {
    let z = z_for_level(level)?;
    Ok((point - z * bse, point + z * bse))
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Assembles a result from a point estimate and replicate outcomes.
pub fn summarize_replicates(point: f64, outcomes: &[Option<f64>], level: f64) -> Result<BootstrapResult> {
    let b = outcomes.len();
    let replicates: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let failed = b - replicates.len();
    if failed as f64 > MAX_FAILURE_RATE * b as f64 || replicates.len() < 2 {
        return Err(Error::TooManyBootstrapFailures { failed, requested: b });
    }
    let bse = sample_sd(&replicates);
    Ok(BootstrapResult {
        point,
        bse,
        ci_normal: normal_interval(point, bse, level)?,
        ci_percentile: percentile_interval(&replicates, level)?,
        ci_level: level,
        b,
        b_effective: replicates.len(),
        failed,
        replicates,
    })
}

/// Pooled estimate on `data` with imputations seeded from the formula, as
/// model selection does.
pub fn point_estimate(
    data: &Dataset,
    imputation_spec: &ModelSpec,
    ps_spec: &ModelSpec,
    cfg: &BootstrapConfig,
) -> Result<EffectEstimate> {
    let estimand = cfg.estimand.unwrap_or_else(|| Estimand::for_outcome(data.outcome_kind()));
    let imps = impute(data, imputation_spec, cfg.m, imputation_seed(cfg.master_seed, imputation_spec))?;
    estimate_effect(&imps, ps_spec, cfg.method, estimand, None, cfg.scale)
}

/// Seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    seed::derive(seed::derive_str(master, "bootstrap"), r as u64)
}

/// Rows drawn with replacement for replicate `r`.
pub fn resample_rows(n: usize, master: u64, r: usize) -> Vec<usize> {
    let mut rng = seed::rng(replicate_seed(master, r));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn one_replicate(
    data: &Dataset,
    imputation_spec: &ModelSpec,
    ps_spec: &ModelSpec,
    cfg: &BootstrapConfig,
    r: usize,
) -> Result<f64> {
    let rows = resample_rows(data.n(), cfg.master_seed, r);
    let sample = data.select_rows(&rows);
    let inner_seed = seed::derive_str(replicate_seed(cfg.master_seed, r), "pipeline");
    match &cfg.reselect {
        None => {
            let inner = BootstrapConfig {
                master_seed: inner_seed,
                reselect: None,
                ..cfg.clone()
            };
            Ok(point_estimate(&sample, imputation_spec, ps_spec, &inner)?.tau)
        }
        Some((pool, eval)) => {
            let eval = EvalConfig {
                methods: vec![cfg.method],
                m: cfg.m,
                estimand: cfg.estimand,
                scale: cfg.scale,
                master_seed: inner_seed,
                ..eval.clone()
            };
            let ev = evaluate_pool(&sample, pool, &eval)?;
            let best = select_best(&ev.reports)?;
            ev.reports[best]
                .estimate()
                .map(|e| e.tau)
                .ok_or(Error::AllCandidatesFailed)
        }
    }
}

/// Bootstraps the effect of a fixed (imputation, propensity) pair.
///
/// Every replicate resamples rows with replacement and redraws the
/// imputations. Failed replicates are dropped; more than
/// [`MAX_FAILURE_RATE`] failures abort.
pub fn bootstrap_effect(
    data: &Dataset,
    imputation_spec: &ModelSpec,
    ps_spec: &ModelSpec,
    cfg: &BootstrapConfig,
) -> Result<(EffectEstimate, BootstrapResult)> {
    if cfg.b < 2 {
        return Err(Error::InvalidArgument("at least two bootstrap resamples are required".into()));
    }
    z_for_level(cfg.ci_level)?;
    let point = point_estimate(data, imputation_spec, ps_spec, cfg)?;
    let outcomes: Vec<Option<f64>> = (0..cfg.b)
        .into_par_iter()
        .map(|r| one_replicate(data, imputation_spec, ps_spec, cfg, r).ok())
        .collect();
    let result = summarize_replicates(point.tau, &outcomes, cfg.ci_level)?;
    Ok((point, result))
}
