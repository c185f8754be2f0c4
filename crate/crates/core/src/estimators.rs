//! Propensity score fitting, IPW and doubly robust effect estimators, and
//! pooling across imputations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CompletedDataset, Dataset, OutcomeKind, Role, IMPUTED_ALIAS, OUTCOME_ALIAS};
use crate::error::{Error, Result};
use crate::formula::{predictor_matrix, response_vector, FormulaError, ModelSpec};
use crate::glm::{fit_glm, predict_mean, Family, FittedGlm};
use crate::imputation::ImputationSet;

/// Fitted propensities are clipped into `[PS_CLIP, 1 - PS_CLIP]`.
pub const PS_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `tau1 / tau0`
    RiskRatio,
    /// `tau1 - tau0`
    MeanDifference,
}

impl Estimand {
    /// Risk ratio for binary outcomes, mean difference for continuous ones.
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Binary => Estimand::RiskRatio,
            OutcomeKind::Continuous => Estimand::MeanDifference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ipw,
    Dr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ipw => "IPW",
            Method::Dr => "DR",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" => Ok(Method::Ipw),
            "dr" => Ok(Method::Dr),
            other => Err(Error::Config(format!("unknown method `{other}` (expected ipw or dr)"))),
        }
    }
}

/// Scale on which per-imputation estimates are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingScale {
    /// Ratios averaged on the log scale; differences on the raw scale.
    #[default]
    Log,
    /// Everything averaged on the raw scale (sensitivity analysis).
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectTriple {
    pub tau1: f64,
    pub tau0: f64,
    pub tau: f64,
}

impl EffectTriple {
    pub fn combine(tau1: f64, tau0: f64, estimand: Estimand) -> Result<Self> {
        let tau = match estimand {
            Estimand::RiskRatio => {
                if tau0 == 0.0 {
                    return Err(Error::RatioUndefined);
                }
                tau1 / tau0
            }
            Estimand::MeanDifference => tau1 - tau0,
        };
        Ok(EffectTriple { tau1, tau0, tau })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub method: Method,
    pub tau1: f64,
    pub tau0: f64,
    pub tau: f64,
    pub per_imputation: Vec<EffectTriple>,
    /// Between-imputation variance on the pooling scale.
    pub between_variance: f64,
    /// `W + (1 + 1/m) B`, present only when within-imputation variances were supplied.
    pub pooled_variance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PsFit {
    pub spec: ModelSpec,
    /// Clipped fitted propensities, one vector per completion.
    pub ps_values: Vec<Vec<f64>>,
    pub per_completion_fits: Vec<FittedGlm>,
}

/// Propensity models regress the imputed exposure on covariates only.
pub fn check_ps_spec(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    match data.resolve(&spec.response) {
        Some(Role::ImputedExposure) | Some(Role::Exposure) => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "propensity model `{spec}` must have the (imputed) exposure as its response"
            )))
        }
    }
    for p in &spec.predictors {
        match data.resolve(p) {
            Some(Role::Covariate(_)) => {}
            Some(Role::Outcome) => {
                return Err(Error::InvalidArgument(format!(
                    "the outcome `{p}` cannot be a propensity model predictor"
                )))
            }
            Some(_) => {
                return Err(Error::InvalidArgument(format!(
                    "`{p}` cannot be a propensity model predictor"
                )))
            }
            None => return Err(FormulaError::Unresolved(p.clone()).into()),
        }
    }
    Ok(())
}

/// Fits the propensity model on one completion given its predictor matrix.
pub(crate) fn fit_ps_on(completion: &CompletedDataset<'_>, x: &DMatrix<f64>) -> Result<(FittedGlm, Vec<f64>)> {
    let y = nalgebra::DVector::from_iterator(
        completion.n(),
        completion.exposure_imputed.iter().map(|&a| f64::from(a)),
    );
    let fit = fit_glm(x, &y, Family::Logistic)?;
    let ps = predict_mean(&fit, x)?
        .iter()
        .map(|p| p.clamp(PS_CLIP, 1.0 - PS_CLIP))
        .collect();
    Ok((fit, ps))
}

/// One logistic propensity fit per completion.
pub fn fit_ps(imps: &ImputationSet<'_>, spec: &ModelSpec) -> Result<PsFit> {
    let first = imps
        .completions
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty imputation set".into()))?;
    check_ps_spec(first.base, spec)?;
    let rows: Vec<usize> = (0..first.n()).collect();
    let x = predictor_matrix(&spec.predictors, first.base, &rows)?;
    let mut ps_values = Vec::with_capacity(imps.m());
    let mut fits = Vec::with_capacity(imps.m());
    for c in &imps.completions {
        let (mut fit, ps) = fit_ps_on(c, &x)?;
        fit.spec = Some(spec.clone());
        fits.push(fit);
        ps_values.push(ps);
    }
    Ok(PsFit {
        spec: spec.clone(),
        ps_values,
        per_completion_fits: fits,
    })
}

fn check_ps(ps: &[f64], n: usize) -> Result<()> {
    if ps.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} propensity values for {n} rows",
            ps.len()
        )));
    }
    if ps.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument("propensity values must lie strictly inside (0, 1)".into()));
    }
    Ok(())
}

/// `(tau1, tau0)` of the inverse-weighting estimator.
pub fn ipw_components(a: &[u8], y: &[f64], ps: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for ((&ai, &yi), &p) in a.iter().zip(y).zip(ps) {
        if ai == 1 {
            s1 += yi / p;
        } else {
            s0 += yi / (1.0 - p);
        }
    }
    (s1 / n, s0 / n)
}

/// `(tau1, tau0)` of the augmented (doubly robust) estimator:
///
/// `tau1 = mean[A Y / p - (A - p) / p * m1]`,
/// `tau0 = mean[(1 - A) Y / (1 - p) + (A - p) / (1 - p) * m0]`.
pub fn dr_components(a: &[u8], y: &[f64], ps: &[f64], m1: &[f64], m0: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for i in 0..a.len() {
        let ai = f64::from(a[i]);
        let p = ps[i];
        s1 += ai * y[i] / p - (ai - p) / p * m1[i];
        s0 += (1.0 - ai) * y[i] / (1.0 - p) + (ai - p) / (1.0 - p) * m0[i];
    }
    (s1 / n, s0 / n)
}

pub fn ipw_estimate(completion: &CompletedDataset<'_>, ps: &[f64], estimand: Estimand) -> Result<EffectTriple> {
    check_ps(ps, completion.n())?;
    let (t1, t0) = ipw_components(&completion.exposure_imputed, completion.base.outcome(), ps);
    EffectTriple::combine(t1, t0, estimand)
}

/// Outcome model `Y ~ A_imp + covariates`.
pub fn outcome_spec(covariates: &[String]) -> ModelSpec {
    let mut predictors = vec![IMPUTED_ALIAS.to_string()];
    predictors.extend(covariates.iter().cloned());
    ModelSpec {
        response: OUTCOME_ALIAS.to_string(),
        predictors,
    }
}

pub fn outcome_family(kind: OutcomeKind) -> Family {
    match kind {
        OutcomeKind::Binary => Family::Logistic,
        OutcomeKind::Continuous => Family::Linear,
    }
}

/// Fits `spec` (an outcome model containing the exposure) on one completion.
pub fn fit_outcome_model(completion: &CompletedDataset<'_>, spec: &ModelSpec) -> Result<FittedGlm> {
    let rows: Vec<usize> = (0..completion.n()).collect();
    let x = predictor_matrix(&spec.predictors, completion, &rows)?;
    let y = response_vector(spec, completion, &rows)?;
    let mut fit = fit_glm(&x, &y, outcome_family(completion.base.outcome_kind()))?;
    fit.spec = Some(spec.clone());
    Ok(fit)
}

fn exposure_position(data: &Dataset, spec: &ModelSpec) -> Result<usize> {
    spec.predictors
        .iter()
        .position(|p| matches!(data.resolve(p), Some(Role::ImputedExposure) | Some(Role::Exposure)))
        .map(|j| j + 1)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("outcome model `{spec}` does not contain the exposure"))
        })
}

/// Fitted outcome means with the exposure set to 1 and to 0 on every row.
pub fn counterfactual_means(fit: &FittedGlm, completion: &CompletedDataset<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = fit
        .spec
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("outcome fit carries no model spec".into()))?;
    let ja = exposure_position(completion.base, spec)?;
    let rows: Vec<usize> = (0..completion.n()).collect();
    let mut x = predictor_matrix(&spec.predictors, completion, &rows)?;
    x.column_mut(ja).fill(1.0);
    let m1 = predict_mean(fit, &x)?;
    x.column_mut(ja).fill(0.0);
    let m0 = predict_mean(fit, &x)?;
    Ok((m1.as_slice().to_vec(), m0.as_slice().to_vec()))
}

pub fn dr_estimate(
    completion: &CompletedDataset<'_>,
    ps: &[f64],
    outcome_fit: &FittedGlm,
    estimand: Estimand,
) -> Result<EffectTriple> {
    check_ps(ps, completion.n())?;
    let (m1, m0) = counterfactual_means(outcome_fit, completion)?;
    let (t1, t0) = dr_components(&completion.exposure_imputed, completion.base.outcome(), ps, &m1, &m0);
    EffectTriple::combine(t1, t0, estimand)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Rubin's rules.
///
/// Risk ratios are pooled as geometric means (log scale) by default, so the
/// pooled `tau1 / tau0` equals the pooled `tau`; under [`PoolingScale::Raw`]
/// each field is an arithmetic mean and that identity no longer holds.
/// `within` holds per-imputation variances on the pooling scale.
pub fn pool_rubin(
    per_imputation: &[EffectTriple],
    estimand: Estimand,
    method: Method,
    within: Option<&[f64]>,
    scale: PoolingScale,
) -> Result<EffectEstimate> {
    let m = per_imputation.len();
    if m == 0 {
        return Err(Error::InvalidArgument("cannot pool zero imputations".into()));
    }
    let log_scale = estimand == Estimand::RiskRatio && scale == PoolingScale::Log;
    let (tau1, tau0, tau, pooled_scale) = if log_scale {
        let logs = |f: fn(&EffectTriple) -> f64| -> Result<Vec<f64>> {
            per_imputation
                .iter()
                .map(|t| {
                    let v = f(t);
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::PoolingScale(v))
                    }
                })
                .collect()
        };
        let l1 = logs(|t| t.tau1)?;
        let l0 = logs(|t| t.tau0)?;
        let lt: Vec<f64> = l1.iter().zip(&l0).map(|(a, b)| a - b).collect();
        let (t1, t0) = (mean(&l1).exp(), mean(&l0).exp());
        (t1, t0, t1 / t0, lt)
    } else {
        let t1 = mean(&per_imputation.iter().map(|t| t.tau1).collect::<Vec<_>>());
        let t0 = mean(&per_imputation.iter().map(|t| t.tau0).collect::<Vec<_>>());
        let taus: Vec<f64> = per_imputation.iter().map(|t| t.tau).collect();
        let tau = match estimand {
            Estimand::MeanDifference => t1 - t0,
            Estimand::RiskRatio => mean(&taus),
        };
        (t1, t0, tau, taus)
    };
    let between = sample_var(&pooled_scale);
    let pooled_variance = within.map(|w| mean(w) + (1.0 + 1.0 / m as f64) * between);
    Ok(EffectEstimate {
        estimand,
        method,
        tau1,
        tau0,
        tau,
        per_imputation: per_imputation.to_vec(),
        between_variance: between,
        pooled_variance,
    })
}

/// Steps 2 and 3 of the pipeline for one propensity model: fit it on every
/// completion, estimate per completion, and pool.
///
/// The doubly robust outcome model is `Y ~ A_imp + outcome_covariates`,
/// defaulting to the propensity model's covariates.
pub fn estimate_effect(
    imps: &ImputationSet<'_>,
    ps_spec: &ModelSpec,
    method: Method,
    estimand: Estimand,
    outcome_covariates: Option<&[String]>,
    scale: PoolingScale,
) -> Result<EffectEstimate> {
    let ps = fit_ps(imps, ps_spec)?;
    let covs = outcome_covariates.unwrap_or(&ps_spec.predictors);
    let ospec = outcome_spec(covs);
    let mut triples = Vec::with_capacity(imps.m());
    for (c, p) in imps.completions.iter().zip(&ps.ps_values) {
        let t = match method {
            Method::Ipw => ipw_estimate(c, p, estimand)?,
            Method::Dr => {
                let fit = fit_outcome_model(c, &ospec)?;
                dr_estimate(c, p, &fit, estimand)?
            }
        };
        triples.push(t);
    }
    pool_rubin(&triples, estimand, method, None, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::imputation::impute;
    use crate::seed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn four_rows() -> Dataset {
        Dataset::new(
            vec!["X1".into()],
            vec![vec![0.0, 1.0, 2.0, 3.0]],
            vec![Some(1), Some(1), Some(0), Some(0)],
            vec![1.0, 0.0, 1.0, 0.0],
            OutcomeKind::Binary,
        )
        .unwrap()
    }

    #[test]
    fn ipw_hand_example() {
        let ds = four_rows();
        let c = CompletedDataset::observed(&ds).unwrap();
        let t = ipw_estimate(&c, &[0.5; 4], Estimand::RiskRatio).unwrap();
        assert_abs_diff_eq!(t.tau1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.tau0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.tau, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn all_exposed_ratio_undefined() {
        let ds = Dataset::new(
            vec![],
            vec![],
            vec![Some(1); 4],
            vec![1.0, 0.0, 1.0, 1.0],
            OutcomeKind::Binary,
        )
        .unwrap();
        let c = CompletedDataset::observed(&ds).unwrap();
        let ps = [1.0 - 1e-6; 4];
        let (t1, t0) = ipw_components(&c.exposure_imputed, ds.outcome(), &ps);
        assert_abs_diff_eq!(t1, 0.75, epsilon = 1e-5);
        assert_eq!(t0, 0.0);
        assert!(matches!(ipw_estimate(&c, &ps, Estimand::RiskRatio), Err(Error::RatioUndefined)));
    }

    #[test]
    fn ps_must_be_inside_unit_interval() {
        let ds = four_rows();
        let c = CompletedDataset::observed(&ds).unwrap();
        assert!(ipw_estimate(&c, &[0.5, 0.5, 1.0, 0.5], Estimand::RiskRatio).is_err());
        assert!(ipw_estimate(&c, &[0.5; 3], Estimand::RiskRatio).is_err());
    }

    fn random_instance(n: usize, s: u64) -> (Vec<u8>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = seed::rng(s);
        let a = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
        let y = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
        let ps = (0..n).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
        let m1 = (0..n).map(|_| rng.random::<f64>()).collect();
        let m0 = (0..n).map(|_| rng.random::<f64>()).collect();
        (a, y, ps, m1, m0)
    }

    #[test]
    fn ipw_matches_term_by_term_sum() {
        let (a, y, ps, _, _) = random_instance(50, 21);
        let n = 50.0;
        let mut t1 = 0.0;
        let mut t0 = 0.0;
        for i in 0..50 {
            let ai = a[i] as f64;
            t1 += ai * y[i] / ps[i] / n;
            t0 += (1.0 - ai) * y[i] / (1.0 - ps[i]) / n;
        }
        let (r1, r0) = ipw_components(&a, &y, &ps);
        assert_abs_diff_eq!(r1, t1, epsilon = 1e-12);
        assert_abs_diff_eq!(r0, t0, epsilon = 1e-12);
    }

    #[test]
    fn dr_matches_direct_summation() {
        let (a, y, ps, m1, m0) = random_instance(50, 22);
        let mut t1 = 0.0;
        let mut t0 = 0.0;
        for i in 0..50 {
            let ai = a[i] as f64;
            // m1 + A (Y - m1) / p  and  m0 + (1 - A)(Y - m0) / (1 - p)
            t1 += m1[i] + ai * (y[i] - m1[i]) / ps[i];
            t0 += m0[i] + (1.0 - ai) * (y[i] - m0[i]) / (1.0 - ps[i]);
        }
        let (r1, r0) = dr_components(&a, &y, &ps, &m1, &m0);
        assert_abs_diff_eq!(r1, t1 / 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r0, t0 / 50.0, epsilon = 1e-12);
    }

    #[test]
    fn dr_with_zero_outcome_model_is_ipw() {
        let (a, y, ps, _, _) = random_instance(50, 23);
        let zeros = vec![0.0; 50];
        let (i1, i0) = ipw_components(&a, &y, &ps);
        let (d1, d0) = dr_components(&a, &y, &ps, &zeros, &zeros);
        assert_abs_diff_eq!(i1, d1, epsilon = 1e-12);
        assert_abs_diff_eq!(i0, d0, epsilon = 1e-12);
    }

    #[test]
    fn dr_with_exact_outcome_model_ignores_ps() {
        let (a, _, ps, m1, m0) = random_instance(50, 25);
        let y: Vec<f64> = (0..50).map(|i| if a[i] == 1 { m1[i] } else { m0[i] }).collect();
        let (d1, d0) = dr_components(&a, &y, &ps, &m1, &m0);
        assert_abs_diff_eq!(d1, m1.iter().sum::<f64>() / 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d0, m0.iter().sum::<f64>() / 50.0, epsilon = 1e-12);
    }

    #[test]
    fn estimators_scale_linearly_in_outcome() {
        let (a, y, ps, m1, m0) = random_instance(40, 24);
        let c = 2.5;
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let (i1, i0) = ipw_components(&a, &y, &ps);
        let (s1, s0) = ipw_components(&a, &ys, &ps);
        assert_abs_diff_eq!(s1, c * i1, epsilon = 1e-12);
        assert_abs_diff_eq!(s0, c * i0, epsilon = 1e-12);
        assert_abs_diff_eq!(s1 / s0, i1 / i0, epsilon = 1e-12);
        let m1s: Vec<f64> = m1.iter().map(|v| v * c).collect();
        let m0s: Vec<f64> = m0.iter().map(|v| v * c).collect();
        let (d1, d0) = dr_components(&a, &y, &ps, &m1, &m0);
        let (e1, e0) = dr_components(&a, &ys, &ps, &m1s, &m0s);
        assert_abs_diff_eq!(e1, c * d1, epsilon = 1e-12);
        assert_abs_diff_eq!(e0, c * d0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_ps_reduces_to_group_mean() {
        let mut rng = seed::rng(30);
        for _ in 0..5 {
            let n = 80;
            let a: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5))).collect();
            let ds = Dataset::new(
                vec!["X1".into()],
                vec![(0..n).map(|i| i as f64).collect()],
                a.iter().map(|&v| Some(v)).collect(),
                y.clone(),
                OutcomeKind::Binary,
            )
            .unwrap();
            let imps = impute(&ds, &parse_formula("A ~ X1").unwrap(), 1, 1).unwrap();
            let ps = fit_ps(&imps, &parse_formula("A_imp ~ 1").unwrap()).unwrap();
            let pbar = a.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            assert!(ps.ps_values[0].iter().all(|p| (p - pbar).abs() < 1e-9));
            let (t1, _) = ipw_components(&a, &y, &ps.ps_values[0]);
            let exposed: Vec<f64> = (0..n).filter(|&i| a[i] == 1).map(|i| y[i]).collect();
            let group_mean = exposed.iter().sum::<f64>() / exposed.len() as f64;
            let oracle = group_mean * (exposed.len() as f64 / n as f64) / pbar;
            assert_abs_diff_eq!(t1, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn intercept_only_ps_on_forty_percent_exposed() {
        let n = 50;
        let a: Vec<Option<u8>> = (0..n).map(|i| Some(u8::from(i % 5 < 2))).collect();
        let ds = Dataset::new(
            vec!["X1".into()],
            vec![(0..n).map(|i| (i as f64).sin()).collect()],
            a,
            (0..n).map(|i| (i % 2) as f64).collect(),
            OutcomeKind::Binary,
        )
        .unwrap();
        let imps = impute(&ds, &parse_formula("A ~ X1").unwrap(), 2, 3).unwrap();
        let ps = fit_ps(&imps, &parse_formula("A_imp ~ 1").unwrap()).unwrap();
        for v in &ps.ps_values {
            assert!(v.iter().all(|p| (p - 0.4).abs() < 1e-9));
        }
    }

    #[test]
    fn ps_spec_rejects_outcome() {
        let ds = four_rows();
        let imps = impute(&ds, &parse_formula("A ~ X1").unwrap(), 1, 1).unwrap();
        assert!(fit_ps(&imps, &parse_formula("A_imp ~ X1 + Y").unwrap()).is_err());
        assert!(fit_ps(&imps, &parse_formula("Y ~ X1").unwrap()).is_err());
    }

    fn triple(t: f64) -> EffectTriple {
        EffectTriple { tau1: t * 0.3, tau0: 0.3, tau: t }
    }

    #[test]
    fn rubin_pooling() {
        let same = vec![triple(1.7); 5];
        let p = pool_rubin(&same, Estimand::RiskRatio, Method::Ipw, None, PoolingScale::Log).unwrap();
        assert_abs_diff_eq!(p.tau, 1.7, epsilon = 1e-12);
        assert_abs_diff_eq!(p.between_variance, 0.0, epsilon = 1e-24);
        assert!(p.pooled_variance.is_none());

        let two = [triple(1.0), triple(4.0)];
        let p = pool_rubin(&two, Estimand::RiskRatio, Method::Ipw, None, PoolingScale::Log).unwrap();
        assert_abs_diff_eq!(p.tau, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.tau, p.tau1 / p.tau0, epsilon = 1e-12);
        let raw = pool_rubin(&two, Estimand::RiskRatio, Method::Ipw, None, PoolingScale::Raw).unwrap();
        assert_abs_diff_eq!(raw.tau, 2.5, epsilon = 1e-12);

        let w = [0.1, 0.3];
        let p = pool_rubin(&two, Estimand::RiskRatio, Method::Ipw, Some(&w), PoolingScale::Log).unwrap();
        let b = (4f64.ln() / 2.0).powi(2) * 2.0;
        assert_abs_diff_eq!(p.between_variance, b, epsilon = 1e-12);
        assert_abs_diff_eq!(p.pooled_variance.unwrap(), 0.2 + 1.5 * b, epsilon = 1e-12);

        let diffs = [
            EffectTriple { tau1: 3.0, tau0: 1.0, tau: 2.0 },
            EffectTriple { tau1: 4.0, tau0: 1.0, tau: 3.0 },
        ];
        let p = pool_rubin(&diffs, Estimand::MeanDifference, Method::Dr, None, PoolingScale::Log).unwrap();
        assert_abs_diff_eq!(p.tau, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.tau, p.tau1 - p.tau0, epsilon = 1e-12);

        assert!(pool_rubin(&[], Estimand::RiskRatio, Method::Ipw, None, PoolingScale::Log).is_err());
        let bad = [EffectTriple { tau1: 0.0, tau0: 0.2, tau: 0.0 }];
        assert!(matches!(
            pool_rubin(&bad, Estimand::RiskRatio, Method::Ipw, None, PoolingScale::Log),
            Err(Error::PoolingScale(_))
        ));
    }
}
