//! Candidate pools of (imputation model, propensity model) pairs, their
//! end-to-end evaluation, and selection by rank score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    self, BalanceContext, CandidateDiagnostics, CandidateReport, CandidateStatus, SplitPlan,
    DEFAULT_SPLITS,
};
use crate::data::{Dataset, IMPUTED_ALIAS, OUTCOME_ALIAS};
use crate::error::{Error, Result};
use crate::estimators::{
    check_ps_spec, counterfactual_means, dr_components, fit_outcome_model, fit_ps_on, ipw_components, outcome_spec,
    pool_rubin, Estimand, EffectTriple, Method, PoolingScale, PS_CLIP,
};
use crate::formula::{predictor_matrix, ModelSpec};
use crate::glm::bic;
use crate::imputation::{check_imputation_spec, impute, ImputationSet, DEFAULT_M};
use crate::seed;

/// A model with a short display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpec {
    pub label: String,
    pub spec: ModelSpec,
}

impl NamedSpec {
    pub fn new(label: &str, spec: ModelSpec) -> Self {
        NamedSpec {
            label: label.to_string(),
            spec,
        }
    }

    /// Labelled by its own formula.
    pub fn unnamed(spec: ModelSpec) -> Self {
        NamedSpec {
            label: spec.to_string(),
            spec,
        }
    }
}

/// Full Cartesian product of imputation and propensity models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub imputation_specs: Vec<NamedSpec>,
    pub ps_specs: Vec<NamedSpec>,
}

fn spec_of(response: &str, parts: &[&[String]]) -> ModelSpec {
    ModelSpec {
        response: response.to_string(),
        predictors: parts.iter().flat_map(|p| p.iter().cloned()).collect(),
    }
}

impl CandidatePool {
    pub fn new(imputation_specs: Vec<ModelSpec>, ps_specs: Vec<ModelSpec>) -> Self {
        CandidatePool {
            imputation_specs: imputation_specs.into_iter().map(NamedSpec::unnamed).collect(),
            ps_specs: ps_specs.into_iter().map(NamedSpec::unnamed).collect(),
        }
    }

    /// The five-by-four pool generated from covariate roles.
    ///
    /// Imputation models: Exp (C+E), Out (C+O), Covs (C+E+O), Res (C+E+Y),
    /// Full (C+E+O+Y). Propensity models: naive (C), exp (C+E), out (C+O),
    /// covs (C+E+O).
    pub fn from_roles(confounders: &[String], exposure_related: &[String], outcome_related: &[String]) -> Self {
        let (c, e, o) = (confounders, exposure_related, outcome_related);
        let y = [OUTCOME_ALIAS.to_string()];
        let a = crate::data::EXPOSURE_ALIAS;
        CandidatePool {
            imputation_specs: vec![
                NamedSpec::new("Exp", spec_of(a, &[c, e])),
                NamedSpec::new("Out", spec_of(a, &[c, o])),
                NamedSpec::new("Covs", spec_of(a, &[c, e, o])),
                NamedSpec::new("Res", spec_of(a, &[c, e, &y])),
                NamedSpec::new("Full", spec_of(a, &[c, e, o, &y])),
            ],
            ps_specs: vec![
                NamedSpec::new("naive", spec_of(IMPUTED_ALIAS, &[c])),
                NamedSpec::new("exp", spec_of(IMPUTED_ALIAS, &[c, e])),
                NamedSpec::new("out", spec_of(IMPUTED_ALIAS, &[c, o])),
                NamedSpec::new("covs", spec_of(IMPUTED_ALIAS, &[c, e, o])),
            ],
        }
    }

    /// The simulation pool: X1 confounder, X2 exposure-related, X3 outcome-related.
    pub fn standard() -> Self {
        Self::from_roles(&["X1".into()], &["X2".into()], &["X3".into()])
    }

    pub fn len(&self) -> usize {
        self.imputation_specs.len() * self.ps_specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(imputation index, ps index)` in enumeration order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.imputation_specs.len()).flat_map(move |i| (0..self.ps_specs.len()).map(move |j| (i, j)))
    }

    /// Label such as `Full, out`.
    pub fn pair_label(&self, i: usize, j: usize) -> String {
        format!("{}, {}", self.imputation_specs[i].label, self.ps_specs[j].label)
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("candidate pool is empty".into()));
        }
        for s in &self.imputation_specs {
            check_imputation_spec(data, &s.spec)?;
        }
        for s in &self.ps_specs {
            check_ps_spec(data, &s.spec)?;
        }
        Ok(())
    }
}

/// How the winner is chosen from an evaluated pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Smallest rank score.
    #[default]
    RankScore,
    /// Highest accuracy first, then smallest outcome BIC.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Estimators to run; the first is the primary one reported as `estimate`.
    pub methods: Vec<Method>,
    pub m: usize,
    /// Test fraction; `None` uses the observed missing rate.
    pub q: Option<f64>,
    pub splits: usize,
    /// `None` picks the risk ratio for binary and the mean difference for continuous outcomes.
    pub estimand: Option<Estimand>,
    pub scale: PoolingScale,
    /// Covariates used by the balance statistics; `None` means all.
    pub balance_covariates: Option<Vec<String>>,
    pub master_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: vec![Method::Ipw],
            m: DEFAULT_M,
            q: None,
            splits: DEFAULT_SPLITS,
            estimand: None,
            scale: PoolingScale::Log,
            balance_covariates: None,
            master_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn with_seed(master_seed: u64) -> Self {
        EvalConfig {
            master_seed,
            ..Self::default()
        }
    }

    pub fn split_plan(&self, data: &Dataset) -> Result<SplitPlan> {
        match self.q {
            Some(q) => SplitPlan::new(q, self.splits),
            None => SplitPlan::for_data(data, self.splits),
        }
    }
}

/// Seed for imputing with `spec`; depends on the formula, not its position.
pub fn imputation_seed(master: u64, spec: &ModelSpec) -> u64 {
    seed::derive_str(master, &format!("impute:{spec}"))
}

/// Seed for the accuracy splits of `spec`.
pub fn accuracy_seed(master: u64, spec: &ModelSpec) -> u64 {
    seed::derive_str(master, &format!("accuracy:{spec}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolEvaluation {
    /// One report per pair in enumeration order.
    pub reports: Vec<CandidateReport>,
    pub plan: SplitPlan,
    pub w_hat_max: f64,
    pub w_hat_clipped: usize,
}

/// Evaluates one propensity model on every completion.
pub fn evaluate_candidate(
    imps: &ImputationSet<'_>,
    ps_spec: &ModelSpec,
    methods: &[Method],
    estimand: Estimand,
    scale: PoolingScale,
    balance: &BalanceContext,
) -> Result<CandidateReport> {
    let data = imps.completions[0].base;
    let rows: Vec<usize> = (0..data.n()).collect();
    let x_ps = predictor_matrix(&ps_spec.predictors, data, &rows)?;
    let ospec = outcome_spec(&ps_spec.predictors);
    let m = imps.m();
    let mut triples: Vec<Vec<EffectTriple>> = vec![Vec::with_capacity(m); methods.len()];
    let mut bic_sum = 0.0;
    let ncov = balance.names.len();
    let mut asmd_sum = vec![0.0; ncov];
    let mut ks_sum = vec![0.0; ncov];
    let mut diag = CandidateDiagnostics {
        ps_min: f64::INFINITY,
        ps_max: f64::NEG_INFINITY,
        positivity_violations: 0,
    };
    for c in &imps.completions {
        let (_, ps) = fit_ps_on(c, &x_ps)?;
        for &p in &ps {
            diag.ps_min = diag.ps_min.min(p);
            diag.ps_max = diag.ps_max.max(p);
            if p <= PS_CLIP || p >= 1.0 - PS_CLIP {
                diag.positivity_violations += 1;
            }
        }
        let ofit = fit_outcome_model(c, &ospec)?;
        bic_sum += bic(&ofit)?;
        let a = &c.exposure_imputed;
        let y = c.base.outcome();
        let mut cf = None;
        for (k, method) in methods.iter().enumerate() {
            let (t1, t0) = match method {
                Method::Ipw => ipw_components(a, y, &ps),
                Method::Dr => {
                    if cf.is_none() {
                        cf = Some(counterfactual_means(&ofit, c)?);
                    }
                    let (m1, m0) = cf.as_ref().expect("set above");
                    dr_components(a, y, &ps, m1, m0)
                }
            };
            triples[k].push(EffectTriple::combine(t1, t0, estimand)?);
        }
        for (s, v) in asmd_sum.iter_mut().zip(balance.asmd(a, &ps)?) {
            *s += v;
        }
        for (s, v) in ks_sum.iter_mut().zip(balance.ks(a, &ps)?) {
            *s += v;
        }
    }
    let estimates = methods
        .iter()
        .zip(&triples)
        .map(|(&method, t)| pool_rubin(t, estimand, method, None, scale))
        .collect::<Result<Vec<_>>>()?;
    let asmd_by: Vec<f64> = asmd_sum.iter().map(|s| s / m as f64).collect();
    let ks_by: Vec<f64> = ks_sum.iter().map(|s| s / m as f64).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(CandidateReport {
        imputation_spec: imps.imputation_spec.clone(),
        ps_spec: ps_spec.clone(),
        status: CandidateStatus::Ok,
        estimates,
        accuracy_w: f64::NAN,
        out_bic: bic_sum / m as f64,
        asmd: mean(&asmd_by),
        ks: mean(&ks_by),
        asmd_max: max(&asmd_by),
        ks_max: max(&ks_by),
        asmd_by_covariate: asmd_by,
        ks_by_covariate: ks_by,
        abic: f64::NAN,
        rank_score: f64::NAN,
        diagnostics: diag,
    })
}

/// Evaluates every pair of the pool, then fills ABIC and rank scores.
///
/// Accuracy is computed once per imputation model and shared by its
/// propensity variants. Failures of individual candidates are recorded in
/// their status; only an invalid pool or configuration is an error.
pub fn evaluate_pool(data: &Dataset, pool: &CandidatePool, cfg: &EvalConfig) -> Result<PoolEvaluation> {
    pool.validate(data)?;
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("at least one estimation method is required".into()));
    }
    if cfg.m < 1 {
        return Err(Error::InvalidArgument("number of imputations must be at least 1".into()));
    }
    let plan = cfg.split_plan(data)?;
    let estimand = cfg.estimand.unwrap_or_else(|| Estimand::for_outcome(data.outcome_kind()));
    let balance = match &cfg.balance_covariates {
        Some(names) => BalanceContext::new(data, names)?,
        None => BalanceContext::all(data)?,
    };
    let miss = criteria::fit_missingness(data);

    let rows: Vec<Vec<CandidateReport>> = pool
        .imputation_specs
        .par_iter()
        .map(|imp| {
            let fail_all = |reason: String| {
                pool.ps_specs
                    .iter()
                    .map(|ps| CandidateReport::failed(imp.spec.clone(), ps.spec.clone(), reason.clone()))
                    .collect::<Vec<_>>()
            };
            let accuracy = match &miss {
                Ok(miss) => criteria::weighted_accuracy(data, &imp.spec, &plan, miss, accuracy_seed(cfg.master_seed, &imp.spec)),
                Err(e) => return fail_all(format!("missingness model: {e}")),
            };
            let accuracy = match accuracy {
                Ok(a) => a,
                Err(e) => return fail_all(format!("weighted accuracy: {e}")),
            };
            let imps = match impute(data, &imp.spec, cfg.m, imputation_seed(cfg.master_seed, &imp.spec)) {
                Ok(imps) => imps,
                Err(e) => return fail_all(format!("imputation: {e}")),
            };
            pool.ps_specs
                .par_iter()
                .map(|ps| {
                    match evaluate_candidate(&imps, &ps.spec, &cfg.methods, estimand, cfg.scale, &balance) {
                        Ok(mut r) => {
                            r.accuracy_w = accuracy;
                            r
                        }
                        Err(e) => CandidateReport::failed(imp.spec.clone(), ps.spec.clone(), e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    let mut reports: Vec<CandidateReport> = rows.into_iter().flatten().collect();
    criteria::abic(&mut reports);
    criteria::rank_score(&mut reports);
    let (w_hat_max, w_hat_clipped) = match &miss {
        Ok(m) => (m.max_w_hat(), m.clipped),
        Err(_) => (f64::NAN, 0),
    };
    Ok(PoolEvaluation {
        reports,
        plan,
        w_hat_max,
        w_hat_clipped,
    })
}

/// Index of the smallest rank score; ties go to higher accuracy, then lower
/// outcome BIC, then the earlier candidate.
pub fn select_best(reports: &[CandidateReport]) -> Result<usize> {
    best_by(reports, |r| (r.rank_score, -r.accuracy_w, r.out_bic))
}

/// Index of the highest accuracy; ties go to lower outcome BIC, then the
/// earlier candidate.
pub fn select_sequential(reports: &[CandidateReport]) -> Result<usize> {
    best_by(reports, |r| (-r.accuracy_w, r.out_bic, 0.0))
}

pub fn select(reports: &[CandidateReport], strategy: SelectionStrategy) -> Result<usize> {
    match strategy {
        SelectionStrategy::RankScore => select_best(reports),
        SelectionStrategy::Sequential => select_sequential(reports),
    }
}

fn best_by(reports: &[CandidateReport], key: impl Fn(&CandidateReport) -> (f64, f64, f64)) -> Result<usize> {
    let mut best: Option<(usize, (f64, f64, f64))> = None;
    for (i, r) in reports.iter().enumerate() {
        if !r.is_ok() {
            continue;
        }
        let k = key(r);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                k.0.total_cmp(&b.0)
                    .then(k.1.total_cmp(&b.1))
                    .then(k.2.total_cmp(&b.2))
                    .is_lt()
            }
        };
        if better {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::AllCandidatesFailed)
}
