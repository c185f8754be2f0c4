//! Monte Carlo study: data generation, replicated pool evaluation, and
//! bias/ESE/RMSE and criterion-RMSE correlation summaries.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{spearman, CandidateReport};
use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::estimators::{Estimand, Method};
use crate::formula::{predictor_matrix, ModelSpec};
use crate::glm::expit;
use crate::imputation::{check_imputation_spec, draw_imputation, fit_imputation_model};
use crate::seed;
use crate::selection::{evaluate_pool, CandidatePool, EvalConfig};

/// Three-covariate data generating process.
///
/// Coefficient vectors are ordered (intercept, X1, X2, X3) for missingness
/// and treatment and (intercept, A, X1, X3) for the outcome. A missingness
/// intercept of negative infinity disables missingness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub missingness_coefs: Vec<f64>,
    pub treatment_coefs: Vec<f64>,
    pub outcome_coefs: Vec<f64>,
    pub outcome_kind: OutcomeKind,
    pub true_tau: Option<f64>,
}

impl DgpConfig {
    pub fn binary_benchmark(n: usize) -> Self {
        DgpConfig {
            n,
            missingness_coefs: vec![-0.3, 0.4, 0.6, 1.8],
            treatment_coefs: vec![-0.2, 0.3, 1.0, 0.0],
            outcome_coefs: vec![-0.2, 2.0, -0.3, 2.5],
            outcome_kind: OutcomeKind::Binary,
            true_tau: Some(1.523),
        }
    }

    pub fn continuous_benchmark(n: usize) -> Self {
        DgpConfig {
            outcome_kind: OutcomeKind::Continuous,
            true_tau: Some(2.0),
            ..Self::binary_benchmark(n)
        }
    }

    /// Same process with every exposure observed.
    pub fn without_missingness(mut self) -> Self {
        self.missingness_coefs = vec![f64::NEG_INFINITY, 0.0, 0.0, 0.0];
        self
    }

    pub fn estimand(&self) -> Estimand {
        Estimand::for_outcome(self.outcome_kind)
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            self.missingness_coefs.len(),
            self.treatment_coefs.len(),
            self.outcome_coefs.len(),
        ];
        if lens != [4, 4, 4] {
            return Err(Error::InvalidArgument(format!(
                "coefficient vectors must have length 4, got {lens:?}"
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("sample size must be at least 2".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        if !finite(&self.treatment_coefs) || !finite(&self.outcome_coefs) || !finite(&self.missingness_coefs[1..]) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(())
    }

    fn eta4(c: &[f64], x: [f64; 3]) -> f64 {
        c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2]
    }

    fn outcome_eta(&self, a: f64, x: [f64; 3]) -> f64 {
        let c = &self.outcome_coefs;
        c[0] + c[1] * a + c[2] * x[0] + c[3] * x[2]
    }

    fn missing_prob(&self, x: [f64; 3]) -> f64 {
        if self.missingness_coefs[0] == f64::NEG_INFINITY {
            0.0
        } else {
            expit(Self::eta4(&self.missingness_coefs, x))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    /// `(Y^1, Y^0)` per row.
    pub potential_outcomes: Vec<(f64, f64)>,
    /// Exposure before masking.
    pub true_a: Vec<u8>,
}

pub fn simulate_dataset<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let n = cfg.n;
    let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    let mut true_a = Vec::with_capacity(n);
    let mut po = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut exposure = Vec::with_capacity(n);
    for _ in 0..n {
        let x = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let a = u8::from(rng.random::<f64>() < expit(DgpConfig::eta4(&cfg.treatment_coefs, x)));
        let (y1, y0) = match cfg.outcome_kind {
            OutcomeKind::Binary => {
                let y1 = f64::from(u8::from(rng.random::<f64>() < expit(cfg.outcome_eta(1.0, x))));
                let y0 = f64::from(u8::from(rng.random::<f64>() < expit(cfg.outcome_eta(0.0, x))));
                (y1, y0)
            }
            OutcomeKind::Continuous => {
                let e: f64 = rng.sample(StandardNormal);
                (cfg.outcome_eta(1.0, x) + e, cfg.outcome_eta(0.0, x) + e)
            }
        };
        let missing = rng.random::<f64>() < cfg.missing_prob(x);
        for k in 0..3 {
            cols[k].push(x[k]);
        }
        true_a.push(a);
        po.push((y1, y0));
        y.push(if a == 1 { y1 } else { y0 });
        exposure.push(if missing { None } else { Some(a) });
    }
    let dataset = Dataset::new(
        vec!["X1".into(), "X2".into(), "X3".into()],
        cols,
        exposure,
        y,
        cfg.outcome_kind,
    )?;
    Ok(SimulatedDataset {
        dataset,
        potential_outcomes: po,
        true_a,
    })
}

/// True effect: analytic for the linear outcome, otherwise a Monte Carlo
/// average of the conditional means `E(Y^a | X)` over `n_mc` covariate draws.
pub fn true_effect<R: Rng + ?Sized>(cfg: &DgpConfig, n_mc: usize, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    match cfg.outcome_kind {
        OutcomeKind::Continuous => Ok(cfg.outcome_coefs[1]),
        OutcomeKind::Binary => {
            if n_mc == 0 {
                return Err(Error::InvalidArgument("n_mc must be positive".into()));
            }
            let (mut m1, mut m0) = (0.0, 0.0);
            for _ in 0..n_mc {
                let x = [rng.sample::<f64, _>(StandardNormal), 0.0, rng.sample::<f64, _>(StandardNormal)];
                m1 += expit(cfg.outcome_eta(1.0, x));
                m0 += expit(cfg.outcome_eta(0.0, x));
            }
            Ok(m1 / m0)
        }
    }
}

/// Accuracy of one imputation draw for every row against the unmasked exposure,
/// with the model fitted on the observed rows.
pub fn benchmark_accuracy(sim: &SimulatedDataset, spec: &ModelSpec, seed_: u64) -> Result<f64> {
    let data = &sim.dataset;
    check_imputation_spec(data, spec)?;
    let observed: Vec<usize> = (0..data.n()).filter(|&i| data.missing_indicator()[i] == 0).collect();
    let fit = fit_imputation_model(data, spec, &observed)?;
    let all: Vec<usize> = (0..data.n()).collect();
    let x = predictor_matrix(&spec.predictors, data, &all)?;
    let drawn = draw_imputation(&fit, &x, &mut seed::rng(seed_))?;
    let hits = drawn.iter().zip(&sim.true_a).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / data.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dgp: DgpConfig,
    pub pool: CandidatePool,
    /// Methods, m, splits and q; its seed is ignored in favour of per-replication seeds.
    pub eval: EvalConfig,
    pub replications: usize,
    pub master_seed: u64,
}

/// Data and evaluation seeds of replication `j`; independent of how many
/// replications are run, so a shorter run is a prefix of a longer one.
pub fn replication_seeds(master: u64, j: usize) -> (u64, u64) {
    let s = seed::derive(master, j as u64);
    (seed::derive_str(s, "data"), seed::derive_str(s, "eval"))
}

/// Criterion values and estimates of one candidate in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub candidate: usize,
    pub ok: bool,
    /// One pooled estimate per configured method; NaN when the candidate failed.
    pub estimates: Vec<f64>,
    pub accuracy_w: f64,
    pub out_bic: f64,
    pub asmd: f64,
    pub ks: f64,
    pub abic: f64,
    pub rank_score: f64,
    pub missing_rate: f64,
}

fn record_of(rep: usize, cand: usize, r: &CandidateReport, methods: &[Method], missing_rate: f64) -> ReplicationRecord {
    let estimates = methods
        .iter()
        .map(|&m| r.estimate_for(m).map_or(f64::NAN, |e| e.tau))
        .collect();
    ReplicationRecord {
        replication: rep,
        candidate: cand,
        ok: r.is_ok(),
        estimates,
        accuracy_w: r.accuracy_w,
        out_bic: r.out_bic,
        asmd: r.asmd,
        ks: r.ks,
        abic: r.abic,
        rank_score: r.rank_score,
        missing_rate,
    }
}

/// Runs replication `j` alone.
pub fn run_replication(cfg: &SimConfig, j: usize) -> Result<Vec<ReplicationRecord>> {
    let (data_seed, eval_seed) = replication_seeds(cfg.master_seed, j);
    let sim = simulate_dataset(&cfg.dgp, &mut seed::rng(data_seed))?;
    let eval = EvalConfig {
        master_seed: eval_seed,
        ..cfg.eval.clone()
    };
    let ev = evaluate_pool(&sim.dataset, &cfg.pool, &eval)?;
    let rate = sim.dataset.missing_rate();
    Ok(ev
        .reports
        .iter()
        .enumerate()
        .map(|(c, r)| record_of(j, c, r, &cfg.eval.methods, rate))
        .collect())
}

/// Criteria correlated with RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    OneMinusAccuracy,
    Asmd,
    Ks,
    OutBic,
    Abic,
    RankScore,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::OneMinusAccuracy,
        Criterion::Asmd,
        Criterion::Ks,
        Criterion::OutBic,
        Criterion::Abic,
        Criterion::RankScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::OneMinusAccuracy => "1-accuracy_w",
            Criterion::Asmd => "asmd",
            Criterion::Ks => "ks",
            Criterion::OutBic => "out_bic",
            Criterion::Abic => "abic",
            Criterion::RankScore => "rank_score",
        }
    }

    pub fn value(self, r: &ReplicationRecord) -> f64 {
        match self {
            Criterion::OneMinusAccuracy => 1.0 - r.accuracy_w,
            Criterion::Asmd => r.asmd,
            Criterion::Ks => r.ks,
            Criterion::OutBic => r.out_bic,
            Criterion::Abic => r.abic,
            Criterion::RankScore => r.rank_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub candidate: usize,
    pub label: String,
    pub imputation_spec: ModelSpec,
    pub ps_spec: ModelSpec,
    pub method: Method,
    /// Replications in which the candidate succeeded.
    pub n_ok: usize,
    pub excluded: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Percent of the true effect.
    pub bias_rate: f64,
    pub ese: f64,
    pub rmse: f64,
    pub mean_accuracy_w: f64,
    pub mean_out_bic: f64,
    pub mean_asmd: f64,
    pub mean_ks: f64,
    pub mean_abic: f64,
    pub mean_rank_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub method: Method,
    pub criterion: Criterion,
    /// Average over replications of the per-replication Spearman correlation.
    pub mean_spearman: f64,
    /// Replications with a defined correlation.
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub true_tau: f64,
    pub replications: usize,
    pub mean_missing_rate: f64,
    pub candidates: Vec<CandidateSummary>,
    pub correlations: Vec<CorrelationSummary>,
}

impl SimulationSummary {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &CandidateSummary> {
        self.candidates.iter().filter(move |c| c.method == method)
    }

    /// Candidate with the smallest RMSE for `method`.
    pub fn best(&self, method: Method) -> Option<&CandidateSummary> {
        self.for_method(method)
            .filter(|c| c.rmse.is_finite())
            .min_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }

    /// Candidate with the largest RMSE for `method`.
    pub fn worst(&self, method: Method) -> Option<&CandidateSummary> {
        self.for_method(method)
            .filter(|c| c.rmse.is_finite())
            .max_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }

    pub fn candidate(&self, method: Method, label: &str) -> Option<&CandidateSummary> {
        self.for_method(method).find(|c| c.label == label)
    }

    pub fn correlation(&self, method: Method, criterion: Criterion) -> Option<f64> {
        self.correlations
            .iter()
            .find(|c| c.method == method && c.criterion == criterion)
            .map(|c| c.mean_spearman)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Bias, ESE and RMSE of `estimates` against `truth`, both with divisor N - 1.
pub fn error_moments(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let n = estimates.len() as f64;
    let avg = mean(estimates);
    let denom = (n - 1.0).max(1.0);
    let ese = (estimates.iter().map(|t| (t - avg).powi(2)).sum::<f64>() / denom).sqrt();
    let rmse = (estimates.iter().map(|t| (t - truth).powi(2)).sum::<f64>() / denom).sqrt();
    (avg - truth, ese, rmse)
}

/// Reduces per-replication records to per-candidate moments and averaged
/// criterion-RMSE Spearman correlations.
pub fn summarize(
    records: &[ReplicationRecord],
    pool: &CandidatePool,
    methods: &[Method],
    true_tau: f64,
) -> SimulationSummary {
    let n_cand = pool.len();
    let labels: Vec<(String, ModelSpec, ModelSpec)> = pool
        .pairs()
        .map(|(i, j)| {
            (
                pool.pair_label(i, j),
                pool.imputation_specs[i].spec.clone(),
                pool.ps_specs[j].spec.clone(),
            )
        })
        .collect();
    let mut reps: Vec<usize> = records.iter().map(|r| r.replication).collect();
    reps.sort_unstable();
    reps.dedup();
    let mut by_rep: Vec<Vec<&ReplicationRecord>> = vec![Vec::new(); reps.len()];
    for r in records {
        let k = reps.binary_search(&r.replication).expect("present");
        by_rep[k].push(r);
    }

    let mut candidates = Vec::new();
    let mut correlations = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let mut rmse_vec = vec![f64::NAN; n_cand];
        for c in 0..n_cand {
            let rows: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.candidate == c && r.ok && r.estimates[mi].is_finite())
                .collect();
            let est: Vec<f64> = rows.iter().map(|r| r.estimates[mi]).collect();
            let (bias, ese, rmse) = if est.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                error_moments(&est, true_tau)
            };
            rmse_vec[c] = rmse;
            let avg = |f: fn(&ReplicationRecord) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            candidates.push(CandidateSummary {
                candidate: c,
                label: labels[c].0.clone(),
                imputation_spec: labels[c].1.clone(),
                ps_spec: labels[c].2.clone(),
                method,
                n_ok: rows.len(),
                excluded: reps.len() - rows.len(),
                mean_estimate: mean(&est),
                bias,
                bias_rate: bias / true_tau * 100.0,
                ese,
                rmse,
                mean_accuracy_w: avg(|r| r.accuracy_w),
                mean_out_bic: avg(|r| r.out_bic),
                mean_asmd: avg(|r| r.asmd),
                mean_ks: avg(|r| r.ks),
                mean_abic: avg(|r| r.abic),
                mean_rank_score: avg(|r| r.rank_score),
            });
        }
        for criterion in Criterion::ALL {
            let mut vals = Vec::new();
            for rows in &by_rep {
                let (x, y): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.ok)
                    .map(|r| (criterion.value(r), rmse_vec[r.candidate]))
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .unzip();
                if let Ok(s) = spearman(&x, &y) {
                    vals.push(s);
                }
            }
            correlations.push(CorrelationSummary {
                method,
                criterion,
                mean_spearman: mean(&vals),
                n_used: vals.len(),
            });
        }
    }
    let rates: Vec<f64> = by_rep.iter().filter_map(|rows| rows.first().map(|r| r.missing_rate)).collect();
    SimulationSummary {
        true_tau,
        replications: reps.len(),
        mean_missing_rate: mean(&rates),
        candidates,
        correlations,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub records: Vec<ReplicationRecord>,
    pub summary: SimulationSummary,
}

impl SimulationResult {
    /// Summary over the first `n` replications only.
    pub fn prefix_summary(&self, cfg: &SimConfig, n: usize) -> SimulationSummary {
        let rows: Vec<ReplicationRecord> = self.records.iter().filter(|r| r.replication < n).cloned().collect();
        summarize(&rows, &cfg.pool, &cfg.eval.methods, self.summary.true_tau)
    }
}

/// Number of Monte Carlo draws used when the true effect is not given.
pub const TRUE_EFFECT_DRAWS: usize = 1_000_000;

/// Runs `cfg.replications` independent replications and summarizes them.
///
/// A replication whose pool cannot be evaluated at all is an error; failures
/// of single candidates are excluded from that candidate's moments.
pub fn run_replications(cfg: &SimConfig) -> Result<SimulationResult> {
    cfg.dgp.validate()?;
    if cfg.replications < 2 {
        return Err(Error::InvalidArgument("at least two replications are required".into()));
    }
    let true_tau = match cfg.dgp.true_tau {
        Some(t) => t,
        None => true_effect(
            &cfg.dgp,
            TRUE_EFFECT_DRAWS,
            &mut seed::rng(seed::derive_str(cfg.master_seed, "truth")),
        )?,
    };
    let per_rep: Vec<Vec<ReplicationRecord>> = (0..cfg.replications)
        .into_par_iter()
        .map(|j| run_replication(cfg, j))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
    let summary = summarize(&records, &cfg.pool, &cfg.eval.methods, true_tau);
    Ok(SimulationResult { records, summary })
}
