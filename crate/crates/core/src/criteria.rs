//! Model-evaluation criteria: weighted imputation accuracy, outcome-model BIC,
//! covariate balance (ASMD and KS), ABIC and the rank score.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CompletedDataset, Dataset, MISSING_ALIAS, OUTCOME_ALIAS};
use crate::error::{Error, Result};
use crate::estimators::{fit_outcome_model, outcome_spec, EffectEstimate, Method};
use crate::formula::{design_matrix, predictor_matrix, ModelSpec};
use crate::glm::{bic, fit_glm, predict_mean, Family, FittedGlm, GlmError};
use crate::imputation::{check_imputation_spec, draw_imputation, fit_imputation_model, ImputationSet};
use crate::seed;

/// Upper clip for the fitted missingness probabilities.
pub const W_HAT_MAX: f64 = 1.0 - 1e-6;
/// Default number of independent splits averaged by [`weighted_accuracy`].
pub const DEFAULT_SPLITS: usize = 10;
/// Test fraction used when the data have no missing exposures.
pub const FALLBACK_Q: f64 = 0.2;

/// How observed rows are split into training and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Test rows as a fraction of observed rows.
    pub q: f64,
    /// Number of independent splits averaged.
    pub repeats: usize,
}

impl SplitPlan {
    pub fn new(q: f64, repeats: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("split fraction q = {q} must lie in (0, 1)")));
        }
        if repeats < 1 {
            return Err(Error::InvalidArgument("at least one split is required".into()));
        }
        Ok(SplitPlan { q, repeats })
    }

    /// `q` equal to the observed missing rate, or [`FALLBACK_Q`] when nothing is missing.
    pub fn for_data(data: &Dataset, repeats: usize) -> Result<Self> {
        let rate = data.missing_rate();
        let q = if rate > 0.0 && rate < 1.0 { rate } else { FALLBACK_Q };
        SplitPlan::new(q, repeats)
    }

    pub fn test_size(&self, n_obs: usize) -> usize {
        (self.q * n_obs as f64).round() as usize
    }

    /// Draws a test indicator: exactly `round(q n_obs)` observed rows get 1.
    pub fn draw_delta<R: Rng + ?Sized>(&self, data: &Dataset, rng: &mut R) -> Vec<u8> {
        let observed: Vec<usize> = (0..data.n()).filter(|&i| data.missing_indicator()[i] == 0).collect();
        let k = self.test_size(observed.len()).min(observed.len());
        let mut delta = vec![0u8; data.n()];
        for j in index::sample(rng, observed.len(), k) {
            delta[observed[j]] = 1;
        }
        delta
    }
}

/// Fitted missingness model `R ~ all covariates + Y`.
#[derive(Debug, Clone)]
pub struct MissingnessFit {
    /// `None` when no exposure is missing; then every weight is zero.
    pub fit: Option<FittedGlm>,
    /// Clipped fitted `P(R = 1 | X, Y)`.
    pub w_hat: Vec<f64>,
    /// Rows whose fitted probability exceeded [`W_HAT_MAX`].
    pub clipped: usize,
}

impl MissingnessFit {
    pub fn spec(data: &Dataset) -> ModelSpec {
        let mut predictors: Vec<String> = data.covariate_names().to_vec();
        predictors.push(OUTCOME_ALIAS.to_string());
        ModelSpec {
            response: MISSING_ALIAS.to_string(),
            predictors,
        }
    }

    pub fn max_w_hat(&self) -> f64 {
        self.w_hat.iter().copied().fold(0.0, f64::max)
    }
}

pub fn fit_missingness(data: &Dataset) -> Result<MissingnessFit> {
    if data.missing_count() == 0 {
        return Ok(MissingnessFit {
            fit: None,
            w_hat: vec![0.0; data.n()],
            clipped: 0,
        });
    }
    let spec = MissingnessFit::spec(data);
    let (x, y) = design_matrix(&spec, data)?;
    let mut fit = fit_glm(&x, &y, Family::Logistic)?;
    fit.spec = Some(spec);
    let raw = predict_mean(&fit, &x)?;
    let clipped = raw.iter().filter(|&&w| w > W_HAT_MAX).count();
    let w_hat = raw.iter().map(|w| w.min(W_HAT_MAX)).collect();
    Ok(MissingnessFit {
        fit: Some(fit),
        w_hat,
        clipped,
    })
}

/// Weighted accuracy for one test indicator and one imputed draw on the test rows.
///
/// `imputed[t]` is the draw for the t-th row with `delta = 1`, in row order.
pub fn weighted_accuracy_terms(data: &Dataset, delta: &[u8], imputed: &[u8], w_hat: &[f64]) -> f64 {
    let n_obs = data.observed_count();
    let test_rows = delta.iter().filter(|&&d| d == 1).count();
    let q = test_rows as f64 / n_obs as f64;
    let mut sum = 0.0;
    let mut t = 0;
    for i in 0..data.n() {
        if delta[i] != 1 {
            continue;
        }
        let r = f64::from(data.missing_indicator()[i]);
        if data.exposure()[i] == Some(imputed[t]) {
            sum += (1.0 - r) / (1.0 - w_hat[i]);
        }
        t += 1;
    }
    sum / (data.n() as f64 * q)
}

fn accuracy_one_split<R: Rng + ?Sized>(
    data: &Dataset,
    spec: &ModelSpec,
    plan: &SplitPlan,
    miss: &MissingnessFit,
    rng: &mut R,
) -> Result<f64> {
    let delta = plan.draw_delta(data, rng);
    let k = spec.n_coefficients();
    let test: Vec<usize> = (0..data.n()).filter(|&i| delta[i] == 1).collect();
    let train: Vec<usize> = (0..data.n())
        .filter(|&i| delta[i] == 0 && data.missing_indicator()[i] == 0)
        .collect();
    if test.len() < k + 5 {
        return Err(Error::TooFewRows {
            spec: spec.to_string(),
            rows: test.len(),
            required: k + 5,
        });
    }
    let fit = fit_imputation_model(data, spec, &train)?;
    let x_test = predictor_matrix(&spec.predictors, data, &test)?;
    let imputed = draw_imputation(&fit, &x_test, rng)?;
    Ok(weighted_accuracy_terms(data, &delta, &imputed, &miss.w_hat))
}

/// Accuracy^(w) of `spec`, averaged over `plan.repeats` splits.
///
/// Each split refits the imputation model on the observed non-test rows and
/// draws the test exposures once. A split whose fit is separated is redrawn
/// once before the error propagates.
pub fn weighted_accuracy(
    data: &Dataset,
    spec: &ModelSpec,
    plan: &SplitPlan,
    miss: &MissingnessFit,
    seed_: u64,
) -> Result<f64> {
    Ok(weighted_accuracy_splits(data, spec, plan, miss, seed_)?.iter().sum::<f64>() / plan.repeats as f64)
}

/// Per-split values behind [`weighted_accuracy`].
pub fn weighted_accuracy_splits(
    data: &Dataset,
    spec: &ModelSpec,
    plan: &SplitPlan,
    miss: &MissingnessFit,
    seed_: u64,
) -> Result<Vec<f64>> {
    check_imputation_spec(data, spec)?;
    if miss.w_hat.len() != data.n() {
        return Err(Error::InvalidArgument("missingness fit does not match the dataset".into()));
    }
    if data.observed_count() == 0 {
        return Err(Error::InvalidArgument("no observed exposures to split".into()));
    }
    (0..plan.repeats as u64)
        .map(|s| {
            let mut rng = seed::rng(seed::derive(seed_, s));
            match accuracy_one_split(data, spec, plan, miss, &mut rng) {
                Err(Error::Glm(GlmError::SeparationDetected(_))) => {
                    accuracy_one_split(data, spec, plan, miss, &mut rng)
                }
                other => other,
            }
        })
        .collect()
}

/// Mean over completions of the BIC of `Y ~ A_imp + ps predictors`.
pub fn outcome_bic(imps: &ImputationSet<'_>, ps_spec: &ModelSpec) -> Result<f64> {
    let spec = outcome_spec(&ps_spec.predictors);
    let mut total = 0.0;
    for c in &imps.completions {
        total += bic(&fit_outcome_model(c, &spec)?)?;
    }
    Ok(total / imps.m() as f64)
}

/// Covariate columns prepared once for repeated balance evaluations.
#[derive(Debug, Clone)]
pub struct BalanceContext {
    pub names: Vec<String>,
    columns: Vec<Vec<f64>>,
    sd: Vec<f64>,
    order: Vec<Vec<usize>>,
}

impl BalanceContext {
    pub fn new(data: &Dataset, covariates: &[String]) -> Result<Self> {
        let mut columns = Vec::with_capacity(covariates.len());
        let mut sd = Vec::with_capacity(covariates.len());
        let mut order = Vec::with_capacity(covariates.len());
        for name in covariates {
            let idx = data
                .covariate_index(name)
                .ok_or_else(|| Error::InvalidArgument(format!("`{name}` is not a covariate")))?;
            let col = data.covariate(idx).to_vec();
            let s = sample_sd(&col);
            if !(s > 0.0) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            let mut o: Vec<usize> = (0..col.len()).collect();
            o.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            columns.push(col);
            sd.push(s);
            order.push(o);
        }
        Ok(BalanceContext {
            names: covariates.to_vec(),
            columns,
            sd,
            order,
        })
    }

    /// All covariates of `data`.
    pub fn all(data: &Dataset) -> Result<Self> {
        Self::new(data, data.covariate_names())
    }

    /// Per-covariate ASMD.
    pub fn asmd(&self, a: &[u8], ps: &[f64]) -> Result<Vec<f64>> {
        let u = ipw_weights(a, ps)?;
        let mut out = Vec::with_capacity(self.columns.len());
        for (col, sd) in self.columns.iter().zip(&self.sd) {
            let (mut s1, mut w1, mut s0, mut w0) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..a.len() {
                if a[i] == 1 {
                    s1 += u[i] * col[i];
                    w1 += u[i];
                } else {
                    s0 += u[i] * col[i];
                    w0 += u[i];
                }
            }
            out.push((s1 / w1 - s0 / w0).abs() / sd);
        }
        Ok(out)
    }

    /// Per-covariate weighted two-sample KS distance.
    pub fn ks(&self, a: &[u8], ps: &[f64]) -> Result<Vec<f64>> {
        let u = ipw_weights(a, ps)?;
        let (mut w1, mut w0) = (0.0, 0.0);
        for i in 0..a.len() {
            if a[i] == 1 {
                w1 += u[i];
            } else {
                w0 += u[i];
            }
        }
        let mut out = Vec::with_capacity(self.columns.len());
        for (col, order) in self.columns.iter().zip(&self.order) {
            let (mut f1, mut f0, mut best) = (0.0f64, 0.0f64, 0.0f64);
            for (pos, &i) in order.iter().enumerate() {
                if a[i] == 1 {
                    f1 += u[i] / w1;
                } else {
                    f0 += u[i] / w0;
                }
                let block_ends = order.get(pos + 1).is_none_or(|&j| col[j] != col[i]);
                if block_ends {
                    best = best.max((f1 - f0).abs());
                }
            }
            out.push(best.min(1.0));
        }
        Ok(out)
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `A / ps` for exposed rows and `(1 - A) / (1 - ps)` for unexposed rows.
pub fn ipw_weights(a: &[u8], ps: &[f64]) -> Result<Vec<f64>> {
    if a.len() != ps.len() {
        return Err(Error::InvalidArgument(format!("{} exposures but {} propensities", a.len(), ps.len())));
    }
    if ps.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument("propensity values must lie strictly inside (0, 1)".into()));
    }
    let exposed = a.iter().filter(|&&v| v == 1).count();
    if exposed == 0 || exposed == a.len() {
        return Err(Error::EmptyGroup);
    }
    Ok(a.iter()
        .zip(ps)
        .map(|(&ai, &p)| if ai == 1 { 1.0 / p } else { 1.0 / (1.0 - p) })
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// ASMD averaged over the listed covariates.
pub fn asmd(completion: &CompletedDataset<'_>, ps: &[f64], covariates: &[String]) -> Result<f64> {
    let ctx = BalanceContext::new(completion.base, covariates)?;
    Ok(mean(&ctx.asmd(&completion.exposure_imputed, ps)?))
}

/// Weighted KS statistic averaged over the listed covariates.
pub fn ks_statistic(completion: &CompletedDataset<'_>, ps: &[f64], covariates: &[String]) -> Result<f64> {
    let ctx = BalanceContext::new(completion.base, covariates)?;
    Ok(mean(&ctx.ks(&completion.exposure_imputed, ps)?))
}

/// Mid-ranks in increasing order (1 = smallest); equal values share the
/// average of their positions. NaN sorts last.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]].total_cmp(&v[idx[start]]).is_eq() {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs two equal-length vectors of length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&midranks(x), &midranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn failed_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// `[Rank(1 - accuracy) + Rank(BIC)] / 2` with rank 1 = best.
///
/// NaN marks a failed candidate and ranks last on both axes.
pub fn rank_scores(accuracy: &[f64], bic: &[f64]) -> Vec<f64> {
    let acc_key: Vec<f64> = accuracy
        .iter()
        .map(|&a| if a.is_nan() { f64::INFINITY } else { -a })
        .collect();
    let bic_key: Vec<f64> = bic.iter().map(|&b| failed_to_inf(b)).collect();
    midranks(&acc_key)
        .iter()
        .zip(midranks(&bic_key))
        .map(|(a, b)| (a + b) / 2.0)
        .collect()
}

/// `[(1 - rescaled accuracy) + rescaled BIC] / 2` with min-max rescaling over
/// the finite entries. An axis with max = min contributes 0. Candidates with
/// a non-finite value get NaN.
pub fn abic_values(accuracy: &[f64], bic: &[f64]) -> Vec<f64> {
    fn range(v: &[f64]) -> (f64, f64) {
        v.iter()
            .filter(|x| x.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }
    let (alo, ahi) = range(accuracy);
    let (blo, bhi) = range(bic);
    accuracy
        .iter()
        .zip(bic)
        .map(|(&a, &b)| {
            if !a.is_finite() || !b.is_finite() {
                return f64::NAN;
            }
            let ra = if ahi > alo { (a - alo) / (ahi - alo) } else { 1.0 };
            let rb = if bhi > blo { (b - blo) / (bhi - blo) } else { 0.0 };
            0.5 * ((1.0 - ra) + rb)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum CandidateStatus {
    Ok,
    Failed(String),
}

/// Per-candidate diagnostics gathered during evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    /// Smallest and largest clipped propensity over all completions.
    pub ps_min: f64,
    pub ps_max: f64,
    /// Propensities within 1e-6 of 0 or 1, summed over completions.
    pub positivity_violations: usize,
}

/// One evaluated (imputation model, propensity model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub imputation_spec: ModelSpec,
    pub ps_spec: ModelSpec,
    #[serde(flatten)]
    pub status: CandidateStatus,
    /// Pooled estimates, one per requested method; the first is primary.
    pub estimates: Vec<EffectEstimate>,
    pub accuracy_w: f64,
    pub out_bic: f64,
    pub asmd: f64,
    pub ks: f64,
    pub asmd_max: f64,
    pub ks_max: f64,
    pub asmd_by_covariate: Vec<f64>,
    pub ks_by_covariate: Vec<f64>,
    pub abic: f64,
    pub rank_score: f64,
    pub diagnostics: CandidateDiagnostics,
}

impl CandidateReport {
    /// A report with every criterion unset (NaN).
    pub fn failed(imputation_spec: ModelSpec, ps_spec: ModelSpec, reason: String) -> Self {
        CandidateReport {
            imputation_spec,
            ps_spec,
            status: CandidateStatus::Failed(reason),
            estimates: Vec::new(),
            accuracy_w: f64::NAN,
            out_bic: f64::NAN,
            asmd: f64::NAN,
            ks: f64::NAN,
            asmd_max: f64::NAN,
            ks_max: f64::NAN,
            asmd_by_covariate: Vec::new(),
            ks_by_covariate: Vec::new(),
            abic: f64::NAN,
            rank_score: f64::NAN,
            diagnostics: CandidateDiagnostics::default(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CandidateStatus::Ok
    }

    pub fn estimate(&self) -> Option<&EffectEstimate> {
        self.estimates.first()
    }

    pub fn estimate_for(&self, method: Method) -> Option<&EffectEstimate> {
        self.estimates.iter().find(|e| e.method == method)
    }

    /// Label such as `A ~ X1 + X2 | A_imp ~ X1`.
    pub fn label(&self) -> String {
        format!("{} | {}", self.imputation_spec, self.ps_spec)
    }
}

fn criterion_columns(reports: &[CandidateReport]) -> (Vec<f64>, Vec<f64>) {
    reports
        .iter()
        .map(|r| {
            if r.is_ok() {
                (r.accuracy_w, r.out_bic)
            } else {
                (f64::NAN, f64::NAN)
            }
        })
        .unzip()
}

/// Fills `abic` across the pool.
pub fn abic(reports: &mut [CandidateReport]) {
    let (acc, b) = criterion_columns(reports);
    for (r, v) in reports.iter_mut().zip(abic_values(&acc, &b)) {
        r.abic = v;
    }
}

/// Fills `rank_score` across the pool; failed candidates rank last.
pub fn rank_score(reports: &mut [CandidateReport]) {
    let (acc, b) = criterion_columns(reports);
    for (r, v) in reports.iter_mut().zip(rank_scores(&acc, &b)) {
        r.rank_score = if r.is_ok() { v } else { f64::NAN };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeKind;
    use crate::formula::parse_formula;
    use crate::glm::expit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn covs_dataset(x1: Vec<f64>, x2: Vec<f64>, a: Vec<u8>) -> Dataset {
        let n = a.len();
        Dataset::new(
            vec!["X1".into(), "X2".into()],
            vec![x1, x2],
            a.into_iter().map(Some).collect(),
            (0..n).map(|i| (i % 2) as f64).collect(),
            OutcomeKind::Binary,
        )
        .unwrap()
    }

    fn names() -> Vec<String> {
        vec!["X1".into(), "X2".into()]
    }

    fn random_balance(n: usize, s: u64) -> (Dataset, Vec<f64>) {
        let mut rng = seed::rng(s);
        let x1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Discrete column to exercise ties.
        let x2: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 4.0).floor()).collect();
        let a: Vec<u8> = (0..n).map(|i| u8::from(rng.random::<f64>() < expit(x1[i]))).collect();
        let ps: Vec<f64> = (0..n).map(|_| 0.1 + 0.8 * rng.random::<f64>()).collect();
        (covs_dataset(x1, x2, a), ps)
    }

    #[test]
    fn identical_groups_are_balanced() {
        let x1 = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let x2 = vec![0.5, -1.0, 4.0, 0.5, -1.0, 4.0];
        let ds = covs_dataset(x1, x2, vec![1, 1, 1, 0, 0, 0]);
        let c = CompletedDataset::observed(&ds).unwrap();
        // Matched rows carry equal weights: p for the exposed row, 1 - p for its twin.
        let ps = [0.25, 0.5, 0.125, 0.75, 0.5, 0.875];
        assert_eq!(asmd(&c, &ps, &names()).unwrap(), 0.0);
        assert_eq!(ks_statistic(&c, &ps, &names()).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_give_ks_one() {
        let x1 = vec![1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
        let ds = covs_dataset(x1, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0], vec![1, 1, 1, 0, 0, 0]);
        let c = CompletedDataset::observed(&ds).unwrap();
        let ctx = BalanceContext::new(&ds, &["X1".to_string()]).unwrap();
        let ks = ctx.ks(&c.exposure_imputed, &[0.5; 6]).unwrap();
        assert_eq!(ks, vec![1.0]);
        assert_eq!(ks_statistic(&c, &[0.5; 6], &["X1".to_string()]).unwrap(), 1.0);
    }

    #[test]
    fn balance_errors() {
        let ds = covs_dataset(vec![1.0; 4], vec![1.0, 2.0, 3.0, 4.0], vec![1, 0, 1, 0]);
        let c = CompletedDataset::observed(&ds).unwrap();
        assert!(matches!(asmd(&c, &[0.5; 4], &names()), Err(Error::ZeroVariance(_))));
        let ds = covs_dataset(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0], vec![1; 4]);
        let c = CompletedDataset::observed(&ds).unwrap();
        assert!(matches!(ks_statistic(&c, &[0.5; 4], &names()), Err(Error::EmptyGroup)));
    }

    fn asmd_oracle(ds: &Dataset, ps: &[f64], j: usize) -> f64 {
        let x = ds.covariate(j);
        let a: Vec<u8> = ds.exposure().iter().map(|v| v.unwrap()).collect();
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut num1 = 0.0;
        let mut den1 = 0.0;
        let mut num0 = 0.0;
        let mut den0 = 0.0;
        for i in 0..x.len() {
            let ai = a[i] as f64;
            num1 += ai / ps[i] * x[i];
            den1 += ai / ps[i];
            num0 += (1.0 - ai) / (1.0 - ps[i]) * x[i];
            den0 += (1.0 - ai) / (1.0 - ps[i]);
        }
        (num1 / den1 - num0 / den0).abs() / sd
    }

    fn ks_oracle(ds: &Dataset, ps: &[f64], j: usize) -> f64 {
        let x = ds.covariate(j);
        let a: Vec<u8> = ds.exposure().iter().map(|v| v.unwrap()).collect();
        let w: Vec<f64> = (0..x.len())
            .map(|i| if a[i] == 1 { 1.0 / ps[i] } else { 1.0 / (1.0 - ps[i]) })
            .collect();
        let w1: f64 = (0..x.len()).filter(|&i| a[i] == 1).map(|i| w[i]).sum();
        let w0: f64 = (0..x.len()).filter(|&i| a[i] == 0).map(|i| w[i]).sum();
        let mut best = 0.0f64;
        for &t in x {
            let f1: f64 = (0..x.len()).filter(|&i| a[i] == 1 && x[i] <= t).map(|i| w[i] / w1).sum();
            let f0: f64 = (0..x.len()).filter(|&i| a[i] == 0 && x[i] <= t).map(|i| w[i] / w0).sum();
            best = best.max((f1 - f0).abs());
        }
        best
    }

    #[test]
    fn balance_matches_brute_force_oracles() {
        for s in 0..5 {
            let (ds, ps) = random_balance(100, 100 + s);
            let c = CompletedDataset::observed(&ds).unwrap();
            let ctx = BalanceContext::all(&ds).unwrap();
            let asmds = ctx.asmd(&c.exposure_imputed, &ps).unwrap();
            let kss = ctx.ks(&c.exposure_imputed, &ps).unwrap();
            for j in 0..2 {
                assert_abs_diff_eq!(asmds[j], asmd_oracle(&ds, &ps, j), epsilon = 1e-12);
                assert_abs_diff_eq!(kss[j], ks_oracle(&ds, &ps, j), epsilon = 1e-12);
            }
            assert_abs_diff_eq!(asmd(&c, &ps, &names()).unwrap(), (asmds[0] + asmds[1]) / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn balance_invariant_to_label_swap() {
        let (ds, ps) = random_balance(80, 7);
        let ctx = BalanceContext::all(&ds).unwrap();
        let a: Vec<u8> = ds.exposure().iter().map(|v| v.unwrap()).collect();
        let swapped: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        let ps_swapped: Vec<f64> = ps.iter().map(|p| 1.0 - p).collect();
        let l = ctx.asmd(&a, &ps).unwrap();
        let r = ctx.asmd(&swapped, &ps_swapped).unwrap();
        for (x, y) in l.iter().zip(&r) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let l = ctx.ks(&a, &ps).unwrap();
        let r = ctx.ks(&swapped, &ps_swapped).unwrap();
        for (x, y) in l.iter().zip(&r) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn midranks_and_spearman() {
        assert_eq!(midranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(midranks(&[1.0, 1.0, 1.0, 1.0, 5.0]), vec![2.5, 2.5, 2.5, 2.5, 5.0]);
        let x = [0.3, 1.2, -4.0, 7.5, 2.2];
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rev: Vec<f64> = sorted.iter().rev().copied().collect();
        assert_eq!(spearman(&sorted, &rev).unwrap(), -1.0);
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroRankVariance)));
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    fn brute_midrank(v: &[f64], i: usize) -> f64 {
        let less = v.iter().filter(|&&x| x < v[i]).count() as f64;
        let equal = v.iter().filter(|&&x| x == v[i]).count() as f64;
        less + (equal + 1.0) / 2.0
    }

    #[test]
    fn spearman_with_ties_matches_oracle() {
        let x = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 0.5, 9.0];
        let y = [4.0, 1.0, 1.0, 2.0, 7.0, 7.0, 7.0, 0.0];
        let rx: Vec<f64> = (0..x.len()).map(|i| brute_midrank(&x, i)).collect();
        let ry: Vec<f64> = (0..y.len()).map(|i| brute_midrank(&y, i)).collect();
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        assert_abs_diff_eq!(spearman(&x, &y).unwrap(), cov / (vx * vy).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rank_score_single_and_tied_accuracy() {
        assert_eq!(rank_scores(&[0.7], &[100.0]), vec![1.0]);
        // Four PS variants of the best imputation model share its accuracy,
        // and one of them has the smallest BIC.
        let mut acc = vec![0.62; 4];
        acc.extend((0..16).map(|i| 0.5 - i as f64 * 0.001));
        let mut bic: Vec<f64> = (0..20).map(|i| 500.0 + i as f64).collect();
        bic[1] = 400.0;
        let scores = rank_scores(&acc, &bic);
        assert_eq!(scores[1], 1.75);
        assert!(scores.iter().all(|&s| (1.0..=20.0).contains(&s)));
    }

    #[test]
    fn failed_candidates_rank_last() {
        let scores = rank_scores(&[0.6, f64::NAN, 0.5], &[10.0, f64::NAN, 20.0]);
        assert_eq!(scores, vec![1.0, 3.0, 2.0]);
        let ab = abic_values(&[0.6, f64::NAN, 0.5], &[10.0, f64::NAN, 20.0]);
        assert_eq!(ab[0], 0.0);
        assert!(ab[1].is_nan());
        assert_eq!(ab[2], 1.0);
    }

    #[test]
    fn abic_endpoints_and_degenerate_axis() {
        let ab = abic_values(&[0.9, 0.7, 0.5], &[10.0, 15.0, 30.0]);
        assert_eq!(ab[0], 0.0);
        assert_eq!(ab[2], 1.0);
        assert!(ab.iter().all(|v| (0.0..=1.0).contains(v)));
        let flat = abic_values(&[0.6, 0.6], &[1.0, 2.0]);
        assert_eq!(flat, vec![0.0, 0.5]);
        assert_eq!(abic_values(&[0.6], &[3.0]), vec![0.0]);
    }

    proptest! {
        #[test]
        fn rank_score_invariant_under_monotone_maps(
            acc in proptest::collection::vec(0.0f64..1.0, 1..12),
            seed_ in 0u64..1000,
        ) {
            let mut rng = seed::rng(seed_);
            let bic: Vec<f64> = acc.iter().map(|_| 100.0 + 50.0 * rng.random::<f64>()).collect();
            let base = rank_scores(&acc, &bic);
            let bic_exp: Vec<f64> = bic.iter().map(|b| (b / 50.0).exp()).collect();
            let bic_aff: Vec<f64> = bic.iter().map(|b| 3.0 * b - 7.0).collect();
            let acc_cube: Vec<f64> = acc.iter().map(|a| a.powi(3)).collect();
            prop_assert_eq!(&rank_scores(&acc, &bic_exp), &base);
            prop_assert_eq!(&rank_scores(&acc, &bic_aff), &base);
            prop_assert_eq!(&rank_scores(&acc_cube, &bic), &base);
            for s in &base {
                prop_assert!(*s >= 1.0 && *s <= acc.len() as f64);
            }
        }

        #[test]
        fn abic_invariant_under_affine_bic(
            acc in proptest::collection::vec(0.0f64..1.0, 2..12),
            scale in 0.1f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            let bic: Vec<f64> = acc.iter().enumerate().map(|(i, a)| 300.0 + i as f64 * 3.7 - 40.0 * a).collect();
            let moved: Vec<f64> = bic.iter().map(|b| scale * b + shift).collect();
            let l = abic_values(&acc, &bic);
            let r = abic_values(&acc, &moved);
            for (x, y) in l.iter().zip(&r) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!(*x >= 0.0 && *x <= 1.0);
            }
        }

        #[test]
        fn spearman_bounded(x in proptest::collection::vec(-5.0f64..5.0, 3..20)) {
            let y: Vec<f64> = x.iter().rev().map(|v| v.round()).collect();
            if let Ok(r) = spearman(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }

    fn split_dataset(n: usize, s: u64, missing: bool) -> Dataset {
        let mut rng = seed::rng(s);
        let x1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a: Vec<u8> = (0..n).map(|i| u8::from(rng.random::<f64>() < expit(1.5 * x1[i]))).collect();
        let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(rng.random::<f64>() < expit(a[i] as f64 - 0.3)))).collect();
        let exposure = (0..n)
            .map(|i| if missing && rng.random::<f64>() < expit(x1[i] - 0.5) { None } else { Some(a[i]) })
            .collect();
        Dataset::new(vec!["X1".into()], vec![x1], exposure, y, OutcomeKind::Binary).unwrap()
    }

    #[test]
    fn split_plan_draws_exact_test_size_on_observed_rows() {
        let ds = split_dataset(300, 3, true);
        let plan = SplitPlan::for_data(&ds, 3).unwrap();
        assert_abs_diff_eq!(plan.q, ds.missing_rate(), epsilon = 1e-15);
        let mut rng = seed::rng(1);
        let delta = plan.draw_delta(&ds, &mut rng);
        let want = (plan.q * ds.observed_count() as f64).round() as usize;
        assert_eq!(delta.iter().filter(|&&d| d == 1).count(), want);
        assert!((0..ds.n()).all(|i| delta[i] == 0 || ds.missing_indicator()[i] == 0));
        assert!(SplitPlan::new(0.0, 1).is_err());
        assert!(SplitPlan::new(0.3, 0).is_err());
    }

    #[test]
    fn perfect_imputation_without_missingness_scores_one() {
        let ds = split_dataset(40, 4, false);
        let delta: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let truth: Vec<u8> = (0..40).filter(|i| i % 4 == 0).map(|i| ds.exposure()[i].unwrap()).collect();
        assert_eq!(weighted_accuracy_terms(&ds, &delta, &truth, &[0.0; 40]), 1.0);
    }

    #[test]
    fn zero_weights_reduce_to_plain_test_accuracy() {
        let ds = split_dataset(50, 5, false);
        let delta: Vec<u8> = (0..50).map(|i| u8::from(i % 5 == 0)).collect();
        let imputed: Vec<u8> = (0..10).map(|t| (t % 2) as u8).collect();
        let test: Vec<usize> = (0..50).filter(|i| i % 5 == 0).collect();
        let hits = test
            .iter()
            .zip(&imputed)
            .filter(|(&i, &v)| ds.exposure()[i] == Some(v))
            .count();
        assert_eq!(
            weighted_accuracy_terms(&ds, &delta, &imputed, &[0.0; 50]),
            hits as f64 / 10.0
        );
    }

    #[test]
    fn weighted_accuracy_is_permutation_equivariant() {
        let ds = split_dataset(60, 6, true);
        let w: Vec<f64> = (0..60).map(|i| 0.1 + 0.01 * i as f64).collect();
        let obs: Vec<usize> = (0..60).filter(|&i| ds.missing_indicator()[i] == 0).collect();
        let delta: Vec<u8> = (0..60).map(|i| u8::from(obs.iter().step_by(3).any(|&o| o == i))).collect();
        let test: Vec<usize> = (0..60).filter(|&i| delta[i] == 1).collect();
        let imputed: Vec<u8> = test.iter().map(|&i| (i % 2) as u8).collect();
        let base = weighted_accuracy_terms(&ds, &delta, &imputed, &w);

        let perm: Vec<usize> = (0..60).rev().collect();
        let pds = ds.select_rows(&perm);
        let pdelta: Vec<u8> = perm.iter().map(|&i| delta[i]).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let pimputed: Vec<u8> = perm.iter().filter(|&&i| delta[i] == 1).map(|&i| (i % 2) as u8).collect();
        assert_abs_diff_eq!(weighted_accuracy_terms(&pds, &pdelta, &pimputed, &pw), base, epsilon = 1e-12);
    }

    #[test]
    fn weighted_accuracy_is_reproducible_and_plausible() {
        let ds = split_dataset(400, 7, true);
        let miss = fit_missingness(&ds).unwrap();
        assert!(miss.fit.is_some());
        assert!(miss.w_hat.iter().all(|&w| (0.0..1.0).contains(&w)));
        let plan = SplitPlan::for_data(&ds, 4).unwrap();
        let spec = parse_formula("A ~ X1 + Y").unwrap();
        let a = weighted_accuracy(&ds, &spec, &plan, &miss, 11).unwrap();
        let b = weighted_accuracy(&ds, &spec, &plan, &miss, 11).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.5 && a < 1.1, "accuracy {a}");
        let splits = weighted_accuracy_splits(&ds, &spec, &plan, &miss, 11).unwrap();
        assert_eq!(splits.len(), 4);
    }

    #[test]
    fn no_missingness_fit_has_zero_weights() {
        let ds = split_dataset(30, 8, false);
        let miss = fit_missingness(&ds).unwrap();
        assert!(miss.fit.is_none());
        assert!(miss.w_hat.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn accuracy_rejects_tiny_test_sets() {
        let ds = split_dataset(30, 9, true);
        let miss = fit_missingness(&ds).unwrap();
        let plan = SplitPlan::new(0.1, 1).unwrap();
        let spec = parse_formula("A ~ X1 + Y").unwrap();
        assert!(matches!(
            weighted_accuracy(&ds, &spec, &plan, &miss, 1),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn outcome_bic_of_identical_completions() {
        let ds = split_dataset(120, 10, false);
        let imps = crate::imputation::impute(&ds, &parse_formula("A ~ X1").unwrap(), 3, 1).unwrap();
        let ps = parse_formula("A_imp ~ X1").unwrap();
        let single = bic(&fit_outcome_model(&imps.completions[0], &outcome_spec(&ps.predictors)).unwrap()).unwrap();
        assert_eq!(outcome_bic(&imps, &ps).unwrap(), single);
    }
}
