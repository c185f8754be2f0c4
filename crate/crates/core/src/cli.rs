//! Batch front end: config parsing, the `select`, `estimate`, `simulate` and
//! `accuracy` subcommands, and report files.
//!
//! Exit codes: 0 success, 2 configuration or schema error, 3 computation failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bootstrap::{bootstrap_effect, point_estimate, BootstrapConfig, BootstrapResult, DEFAULT_B};
use crate::criteria::{fit_missingness, weighted_accuracy_splits, CandidateReport, CandidateStatus, DEFAULT_SPLITS};
use crate::data::{load_csv, validate_positivity, CsvSchema, Dataset, OutcomeKind, PositivityReport};
use crate::error::{Error, Result};
use crate::estimators::{fit_ps, EffectEstimate, Estimand, Method, PoolingScale};
use crate::formula::{parse_formula, ModelSpec};
use crate::imputation::{impute, DEFAULT_M};
use crate::selection::{
    accuracy_seed, evaluate_pool, imputation_seed, select, CandidatePool, EvalConfig, PoolEvaluation,
    SelectionStrategy,
};
use crate::simulation::{run_replications, Criterion, DgpConfig, SimConfig, SimulationResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "missing-exposure", version, about = "Causal effects with a missing binary exposure")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every candidate pair and select the best by rank score.
    Select(CommonArgs),
    /// Estimate the effect of the chosen pair with bootstrap intervals.
    Estimate(CommonArgs),
    /// Run the Monte Carlo study.
    Simulate(CommonArgs),
    /// Weighted imputation accuracy of each imputation model.
    Accuracy(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = ["ipw", "dr"])]
    pub method: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long = "ci-level")]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a run needs, from the config file with flag overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub outcome_kind: OutcomeKind,
    pub missing_token: String,
    pub imputation: Vec<String>,
    pub ps: Vec<String>,
    pub confounders: Option<Vec<String>>,
    pub exposure_related: Option<Vec<String>>,
    pub outcome_related: Option<Vec<String>>,
    pub selected_imputation: Option<String>,
    pub selected_ps: Option<String>,
    pub methods: Option<Vec<Method>>,
    pub estimand: Option<Estimand>,
    pub pooling: PoolingScale,
    pub strategy: SelectionStrategy,
    pub m: usize,
    pub q: Option<f64>,
    pub splits: usize,
    pub b: usize,
    pub ci_level: f64,
    pub reselect: bool,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub dgp: String,
    pub n: usize,
    pub replications: usize,
    pub missingness_coefs: Option<Vec<f64>>,
    pub treatment_coefs: Option<Vec<f64>>,
    pub outcome_coefs: Option<Vec<f64>>,
    pub true_tau: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            exposure: "A".into(),
            outcome: "Y".into(),
            covariates: Vec::new(),
            outcome_kind: OutcomeKind::Binary,
            missing_token: "NA".into(),
            imputation: Vec::new(),
            ps: Vec::new(),
            confounders: None,
            exposure_related: None,
            outcome_related: None,
            selected_imputation: None,
            selected_ps: None,
            methods: None,
            estimand: None,
            pooling: PoolingScale::Log,
            strategy: SelectionStrategy::RankScore,
            m: DEFAULT_M,
            q: None,
            splits: DEFAULT_SPLITS,
            b: DEFAULT_B,
            ci_level: 0.95,
            reselect: false,
            seed: None,
            out: PathBuf::from("out"),
            dgp: "binary".into(),
            n: 500,
            replications: 1000,
            missingness_coefs: None,
            treatment_coefs: None,
            outcome_coefs: None,
            true_tau: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{v}`")))
}

fn nums(key: &str, v: &str) -> Result<Vec<f64>> {
    list(v).iter().map(|s| num(key, s)).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

/// Parses the flat `key = value` format. `#` starts a comment; `imputation`
/// and `ps` may repeat, one formula per line.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (key, v) = (key.trim(), value.trim());
        let count = seen.entry(key.to_string()).or_insert(0);
        *count += 1;
        if *count > 1 && key != "imputation" && key != "ps" {
            return Err(cfg_err(format!("line {}: `{key}` given twice", lineno + 1)));
        }
        match key {
            "data" => c.data = Some(PathBuf::from(v)),
            "exposure" => c.exposure = v.into(),
            "outcome" => c.outcome = v.into(),
            "covariates" => c.covariates = list(v),
            "outcome_kind" => {
                c.outcome_kind = match v {
                    "binary" => OutcomeKind::Binary,
                    "continuous" => OutcomeKind::Continuous,
                    _ => return Err(cfg_err(format!("`outcome_kind` must be binary or continuous, got `{v}`"))),
                }
            }
            "missing_token" => c.missing_token = v.into(),
            "imputation" => c.imputation.push(v.into()),
            "ps" => c.ps.push(v.into()),
            "confounders" => c.confounders = Some(list(v)),
            "exposure_related" => c.exposure_related = Some(list(v)),
            "outcome_related" => c.outcome_related = Some(list(v)),
            "selected_imputation" => c.selected_imputation = Some(v.into()),
            "selected_ps" => c.selected_ps = Some(v.into()),
            "method" => c.methods = Some(list(v).iter().map(|s| s.parse()).collect::<Result<_>>()?),
            "estimand" => {
                c.estimand = Some(match v {
                    "risk_ratio" => Estimand::RiskRatio,
                    "mean_difference" => Estimand::MeanDifference,
                    _ => return Err(cfg_err(format!("`estimand` must be risk_ratio or mean_difference, got `{v}`"))),
                })
            }
            "pooling" => {
                c.pooling = match v {
                    "log" => PoolingScale::Log,
                    "raw" => PoolingScale::Raw,
                    _ => return Err(cfg_err(format!("`pooling` must be log or raw, got `{v}`"))),
                }
            }
            "strategy" => {
                c.strategy = match v {
                    "rank_score" => SelectionStrategy::RankScore,
                    "sequential" => SelectionStrategy::Sequential,
                    _ => return Err(cfg_err(format!("`strategy` must be rank_score or sequential, got `{v}`"))),
                }
            }
            "m" => c.m = num(key, v)?,
            "q" => c.q = Some(num(key, v)?),
            "splits" => c.splits = num(key, v)?,
            "B" => c.b = num(key, v)?,
            "ci_level" => c.ci_level = num(key, v)?,
            "reselect" => c.reselect = flag(key, v)?,
            "seed" => c.seed = Some(num(key, v)?),
            "out" => c.out = PathBuf::from(v),
            "dgp" => c.dgp = v.into(),
            "n" => c.n = num(key, v)?,
            "replications" => c.replications = num(key, v)?,
            "missingness_coefs" => c.missingness_coefs = Some(nums(key, v)?),
            "treatment_coefs" => c.treatment_coefs = Some(nums(key, v)?),
            "outcome_coefs" => c.outcome_coefs = Some(nums(key, v)?),
            "true_tau" => c.true_tau = Some(num(key, v)?),
            other => return Err(cfg_err(format!("line {}: unknown key `{other}`", lineno + 1))),
        }
    }
    Ok(c)
}

impl RunConfig {
    /// Reads the config file (if any) and applies command-line overrides.
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut c = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(d) = &args.data {
            c.data = Some(d.clone());
        }
        if let Some(m) = &args.method {
            c.methods = Some(vec![m.parse()?]);
        }
        if let Some(v) = args.m {
            c.m = v;
        }
        if args.q.is_some() {
            c.q = args.q;
        }
        if let Some(v) = args.splits {
            c.splits = v;
        }
        if let Some(v) = args.b {
            c.b = v;
        }
        if let Some(v) = args.ci_level {
            c.ci_level = v;
        }
        if args.seed.is_some() {
            c.seed = args.seed;
        }
        if let Some(o) = &args.out {
            c.out = o.clone();
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(cfg_err("a seed is required (`seed = ...` or --seed)"));
        }
        if self.m < 1 {
            return Err(cfg_err("m must be at least 1"));
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q < 1.0) {
                return Err(cfg_err(format!("q = {q} must lie in (0, 1)")));
            }
        }
        if self.splits < 1 {
            return Err(cfg_err("splits must be at least 1"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(cfg_err("ci_level must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn primary_method(&self) -> Method {
        self.methods.as_ref().and_then(|m| m.first().copied()).unwrap_or(Method::Ipw)
    }

    pub fn schema(&self) -> CsvSchema {
        let covs: Vec<&str> = self.covariates.iter().map(String::as_str).collect();
        CsvSchema::new(&self.exposure, &self.outcome, &covs, self.outcome_kind).with_missing_token(&self.missing_token)
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let path = self.data.as_ref().ok_or_else(|| cfg_err("no dataset given (`data = ...` or --data)"))?;
        if self.covariates.is_empty() {
            return Err(cfg_err("`covariates` must list at least one column"));
        }
        Ok(load_csv(path, &self.schema())?)
    }

    fn parse_specs(texts: &[String]) -> Result<Vec<ModelSpec>> {
        texts.iter().map(|t| Ok(parse_formula(t)?)).collect()
    }

    /// Explicit formula lists, else the pattern generated from role tags.
    pub fn pool(&self) -> Result<CandidatePool> {
        if !self.imputation.is_empty() || !self.ps.is_empty() {
            if self.imputation.is_empty() || self.ps.is_empty() {
                return Err(cfg_err("give both `imputation` and `ps` formulas, or neither"));
            }
            return Ok(CandidatePool::new(
                Self::parse_specs(&self.imputation)?,
                Self::parse_specs(&self.ps)?,
            ));
        }
        match (&self.confounders, &self.exposure_related, &self.outcome_related) {
            (Some(c), Some(e), Some(o)) => Ok(CandidatePool::from_roles(c, e, o)),
            _ => Err(cfg_err(
                "no candidate models: list `imputation` and `ps` formulas or tag `confounders`, `exposure_related` and `outcome_related`",
            )),
        }
    }

    pub fn eval_config(&self, methods: Vec<Method>) -> EvalConfig {
        EvalConfig {
            methods,
            m: self.m,
            q: self.q,
            splits: self.splits,
            estimand: self.estimand,
            scale: self.pooling,
            balance_covariates: None,
            master_seed: self.seed(),
        }
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b,
            m: self.m,
            method: self.primary_method(),
            estimand: self.estimand,
            scale: self.pooling,
            ci_level: self.ci_level,
            master_seed: self.seed(),
            reselect: None,
        }
    }

    pub fn dgp_config(&self) -> Result<DgpConfig> {
        let mut d = match self.dgp.as_str() {
            "binary" => DgpConfig::binary_benchmark(self.n),
            "continuous" => DgpConfig::continuous_benchmark(self.n),
            other => return Err(cfg_err(format!("`dgp` must be binary or continuous, got `{other}`"))),
        };
        let custom = self.missingness_coefs.is_some() || self.treatment_coefs.is_some() || self.outcome_coefs.is_some();
        if let Some(v) = &self.missingness_coefs {
            d.missingness_coefs = v.clone();
        }
        if let Some(v) = &self.treatment_coefs {
            d.treatment_coefs = v.clone();
        }
        if let Some(v) = &self.outcome_coefs {
            d.outcome_coefs = v.clone();
        }
        if custom {
            d.true_tau = None;
        }
        if self.true_tau.is_some() {
            d.true_tau = self.true_tau;
        }
        d.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(d)
    }
}

/// Config-type errors map to exit code 2, everything else to 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Data(_) | Error::Formula(_) => EXIT_CONFIG,
        _ => EXIT_COMPUTE,
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Column header of `candidates.csv`.
pub const CANDIDATE_COLUMNS: [&str; 9] = [
    "imputation_spec",
    "ps_spec",
    "estimate",
    "accuracy_w",
    "out_bic",
    "asmd",
    "ks",
    "abic",
    "rank_score",
];

pub fn write_candidates_csv<W: Write>(reports: &[CandidateReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANDIDATE_COLUMNS)?;
    for r in reports {
        let est = r.estimate().map_or(f64::NAN, |e| e.tau);
        w.write_record([
            r.imputation_spec.to_string(),
            r.ps_spec.to_string(),
            fmt(est),
            fmt(r.accuracy_w),
            fmt(r.out_bic),
            fmt(r.asmd),
            fmt(r.ks),
            fmt(r.abic),
            fmt(r.rank_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SelectedOutput<'a> {
    pub strategy: SelectionStrategy,
    pub imputation_spec: &'a ModelSpec,
    pub ps_spec: &'a ModelSpec,
    pub rank_score: f64,
    pub accuracy_w: f64,
    pub out_bic: f64,
    pub abic: f64,
    pub estimate: Option<&'a EffectEstimate>,
}

#[derive(Debug, Serialize)]
pub struct CandidateDiagnosticsOutput<'a> {
    pub imputation_spec: &'a ModelSpec,
    pub ps_spec: &'a ModelSpec,
    pub status: &'a CandidateStatus,
    pub separation: bool,
    pub ps_min: f64,
    pub ps_max: f64,
    pub positivity_violations: usize,
    pub asmd_by_covariate: &'a [f64],
    pub ks_by_covariate: &'a [f64],
    pub asmd_max: f64,
    pub ks_max: f64,
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsOutput<'a> {
    pub n: usize,
    pub missing_count: usize,
    pub q: f64,
    pub splits: usize,
    pub w_hat_max: f64,
    pub w_hat_clipped: usize,
    pub candidates: Vec<CandidateDiagnosticsOutput<'a>>,
}

fn diagnostics<'a>(data: &Dataset, ev: &'a PoolEvaluation) -> DiagnosticsOutput<'a> {
    DiagnosticsOutput {
        n: data.n(),
        missing_count: data.missing_count(),
        q: ev.plan.q,
        splits: ev.plan.repeats,
        w_hat_max: ev.w_hat_max,
        w_hat_clipped: ev.w_hat_clipped,
        candidates: ev
            .reports
            .iter()
            .map(|r| CandidateDiagnosticsOutput {
                imputation_spec: &r.imputation_spec,
                ps_spec: &r.ps_spec,
                status: &r.status,
                separation: matches!(&r.status, CandidateStatus::Failed(s) if s.contains("separation")),
                ps_min: r.diagnostics.ps_min,
                ps_max: r.diagnostics.ps_max,
                positivity_violations: r.diagnostics.positivity_violations,
                asmd_by_covariate: &r.asmd_by_covariate,
                ks_by_covariate: &r.ks_by_covariate,
                asmd_max: r.asmd_max,
                ks_max: r.ks_max,
            })
            .collect(),
    }
}

/// `select`: writes `candidates.csv`, `selected.json` and `diagnostics.json`.
pub fn run_select(cfg: &RunConfig) -> Result<(PoolEvaluation, usize)> {
    let data = cfg.load_data()?;
    let pool = cfg.pool()?;
    pool.validate(&data)?;
    let ev = evaluate_pool(&data, &pool, &cfg.eval_config(vec![cfg.primary_method()]))?;
    create_out(&cfg.out)?;
    write_candidates_csv(&ev.reports, fs::File::create(cfg.out.join("candidates.csv"))?)?;
    write_json(&cfg.out.join("diagnostics.json"), &diagnostics(&data, &ev))?;
    let best = select(&ev.reports, cfg.strategy)?;
    let r = &ev.reports[best];
    write_json(
        &cfg.out.join("selected.json"),
        &SelectedOutput {
            strategy: cfg.strategy,
            imputation_spec: &r.imputation_spec,
            ps_spec: &r.ps_spec,
            rank_score: r.rank_score,
            accuracy_w: r.accuracy_w,
            out_bic: r.out_bic,
            abic: r.abic,
            estimate: r.estimate(),
        },
    )?;
    Ok((ev, best))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EstimateOutput {
    pub imputation_spec: ModelSpec,
    pub ps_spec: ModelSpec,
    pub method: Method,
    pub estimate: EffectEstimate,
    pub bootstrap: Option<BootstrapResult>,
    pub positivity: PositivityReport,
}

/// The pair to estimate: configured, the only one, or the selected one.
pub fn chosen_pair(cfg: &RunConfig, data: &Dataset) -> Result<(ModelSpec, ModelSpec)> {
    match (&cfg.selected_imputation, &cfg.selected_ps) {
        (Some(i), Some(p)) => return Ok((parse_formula(i)?, parse_formula(p)?)),
        (None, None) => {}
        _ => return Err(cfg_err("give both `selected_imputation` and `selected_ps`, or neither")),
    }
    let pool = cfg.pool()?;
    pool.validate(data)?;
    if pool.len() == 1 {
        return Ok((pool.imputation_specs[0].spec.clone(), pool.ps_specs[0].spec.clone()));
    }
    let ev = evaluate_pool(data, &pool, &cfg.eval_config(vec![cfg.primary_method()]))?;
    let best = select(&ev.reports, cfg.strategy)?;
    Ok((ev.reports[best].imputation_spec.clone(), ev.reports[best].ps_spec.clone()))
}

/// Library-level estimate with optional bootstrap (`B = 0` skips it).
pub fn estimate_pair(cfg: &RunConfig, data: &Dataset, imp: &ModelSpec, ps: &ModelSpec) -> Result<EstimateOutput> {
    let mut bcfg = cfg.bootstrap_config();
    if cfg.reselect {
        bcfg.reselect = Some((cfg.pool()?, cfg.eval_config(vec![cfg.primary_method()])));
    }
    let (estimate, bootstrap) = if cfg.b == 0 {
        (point_estimate(data, imp, ps, &bcfg)?, None)
    } else {
        let (e, b) = bootstrap_effect(data, imp, ps, &bcfg)?;
        (e, Some(b))
    };
    let imps = impute(data, imp, cfg.m, imputation_seed(cfg.seed(), imp))?;
    let fits = fit_ps(&imps, ps)?;
    let all: Vec<f64> = fits.ps_values.concat();
    Ok(EstimateOutput {
        imputation_spec: imp.clone(),
        ps_spec: ps.clone(),
        method: cfg.primary_method(),
        estimate,
        bootstrap,
        positivity: validate_positivity(&all, 0.01),
    })
}

/// `estimate`: writes `estimate.json`.
pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateOutput> {
    let data = cfg.load_data()?;
    let (imp, ps) = chosen_pair(cfg, &data)?;
    let out = estimate_pair(cfg, &data, &imp, &ps)?;
    create_out(&cfg.out)?;
    write_json(&cfg.out.join("estimate.json"), &out)?;
    Ok(out)
}

pub fn simulation_config(cfg: &RunConfig) -> Result<SimConfig> {
    let pool = if cfg.imputation.is_empty() && cfg.ps.is_empty() && cfg.confounders.is_none() {
        CandidatePool::standard()
    } else {
        cfg.pool()?
    };
    let methods = cfg.methods.clone().unwrap_or_else(|| vec![Method::Ipw, Method::Dr]);
    Ok(SimConfig {
        dgp: cfg.dgp_config()?,
        pool,
        eval: cfg.eval_config(methods),
        replications: cfg.replications,
        master_seed: cfg.seed(),
    })
}

pub fn write_simulation<P: AsRef<Path>>(dir: P, sim: &SimConfig, result: &SimulationResult) -> Result<()> {
    let dir = dir.as_ref();
    create_out(dir)?;
    let s = &result.summary;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "method",
        "candidate",
        "imputation_spec",
        "ps_spec",
        "n_ok",
        "excluded",
        "mean_estimate",
        "bias",
        "bias_rate",
        "ese",
        "rmse",
        "accuracy_w",
        "out_bic",
        "asmd",
        "ks",
        "abic",
        "rank_score",
    ])?;
    for c in &s.candidates {
        w.write_record([
            c.method.to_string(),
            c.label.clone(),
            c.imputation_spec.to_string(),
            c.ps_spec.to_string(),
            c.n_ok.to_string(),
            c.excluded.to_string(),
            fmt(c.mean_estimate),
            fmt(c.bias),
            fmt(c.bias_rate),
            fmt(c.ese),
            fmt(c.rmse),
            fmt(c.mean_accuracy_w),
            fmt(c.mean_out_bic),
            fmt(c.mean_asmd),
            fmt(c.mean_ks),
            fmt(c.mean_abic),
            fmt(c.mean_rank_score),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("correlations.csv"))?;
    w.write_record(["method", "criterion", "mean_spearman", "replications_used"])?;
    for c in &s.correlations {
        w.write_record([
            c.method.to_string(),
            c.criterion.name().to_string(),
            fmt(c.mean_spearman),
            c.n_used.to_string(),
        ])?;
    }
    w.flush()?;

    let labels: Vec<String> = sim.pool.pairs().map(|(i, j)| sim.pool.pair_label(i, j)).collect();
    let mut w = csv::Writer::from_path(dir.join("raw_replicates.csv"))?;
    let mut header: Vec<String> = ["replication", "candidate", "ok", "missing_rate"].map(String::from).to_vec();
    header.extend(sim.eval.methods.iter().map(|m| format!("estimate_{}", m.to_string().to_lowercase())));
    header.extend(["accuracy_w", "out_bic", "asmd", "ks", "abic", "rank_score"].map(String::from));
    w.write_record(&header)?;
    for r in &result.records {
        let mut row = vec![
            r.replication.to_string(),
            labels[r.candidate].clone(),
            r.ok.to_string(),
            fmt(r.missing_rate),
        ];
        row.extend(r.estimates.iter().map(|&v| fmt(v)));
        row.extend([r.accuracy_w, r.out_bic, r.asmd, r.ks, r.abic, r.rank_score].map(fmt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `simulate`: writes `summary.csv`, `correlations.csv` and `raw_replicates.csv`.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulationResult> {
    let sim = simulation_config(cfg)?;
    let result = run_replications(&sim)?;
    write_simulation(&cfg.out, &sim, &result)?;
    if result.summary.candidates.iter().all(|c| c.n_ok == 0) {
        return Err(Error::AllCandidatesFailed);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub imputation_spec: ModelSpec,
    pub accuracy_w: f64,
    pub per_split: Vec<f64>,
}

/// `accuracy`: weighted accuracy per imputation model, written to `accuracy.csv`.
pub fn run_accuracy(cfg: &RunConfig) -> Result<Vec<AccuracyRow>> {
    let data = cfg.load_data()?;
    let specs = if !cfg.imputation.is_empty() {
        RunConfig::parse_specs(&cfg.imputation)?
    } else {
        cfg.pool()?.imputation_specs.into_iter().map(|s| s.spec).collect()
    };
    for s in &specs {
        crate::imputation::check_imputation_spec(&data, s)?;
    }
    let plan = cfg.eval_config(vec![Method::Ipw]).split_plan(&data)?;
    let miss = fit_missingness(&data)?;
    let rows = specs
        .iter()
        .map(|s| {
            let per_split = weighted_accuracy_splits(&data, s, &plan, &miss, accuracy_seed(cfg.seed(), s))?;
            Ok(AccuracyRow {
                imputation_spec: s.clone(),
                accuracy_w: per_split.iter().sum::<f64>() / per_split.len() as f64,
                per_split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    create_out(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join("accuracy.csv"))?;
    w.write_record(["imputation_spec", "accuracy_w", "q", "splits"])?;
    for r in &rows {
        w.write_record([
            r.imputation_spec.to_string(),
            fmt(r.accuracy_w),
            fmt(plan.q),
            plan.repeats.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

fn report_select(ev: &PoolEvaluation, best: usize) {
    println!("{:<32} {:<28} {:>9} {:>8} {:>10} {:>6}", "imputation", "ps", "estimate", "acc_w", "out_bic", "rank");
    for r in &ev.reports {
        println!(
            "{:<32} {:<28} {:>9.4} {:>8.4} {:>10.3} {:>6.2}",
            r.imputation_spec.to_string(),
            r.ps_spec.to_string(),
            r.estimate().map_or(f64::NAN, |e| e.tau),
            r.accuracy_w,
            r.out_bic,
            r.rank_score
        );
    }
    println!("selected: {}", ev.reports[best].label());
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (cmd, common) = match &cli.command {
        Command::Select(a) => ("select", a),
        Command::Estimate(a) => ("estimate", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Accuracy(a) => ("accuracy", a),
    };
    let outcome = RunConfig::from_args(common).and_then(|cfg| match cmd {
        "select" => run_select(&cfg).map(|(ev, best)| report_select(&ev, best)),
        "estimate" => run_estimate(&cfg).map(|o| {
            println!("{} | {} ({}): {:.4}", o.imputation_spec, o.ps_spec, o.method, o.estimate.tau);
            if let Some(b) = &o.bootstrap {
                println!(
                    "BSE {:.4}, normal CI ({:.4}, {:.4}), percentile CI ({:.4}, {:.4}), {} of {} resamples",
                    b.bse, b.ci_normal.0, b.ci_normal.1, b.ci_percentile.0, b.ci_percentile.1, b.b_effective, b.b
                );
            }
        }),
        "simulate" => run_simulate(&cfg).map(|r| {
            for c in &r.summary.correlations {
                if c.criterion == Criterion::RankScore {
                    println!("{}: spearman(rank score, RMSE) = {:.3}", c.method, c.mean_spearman);
                }
            }
            println!("wrote {}", cfg.out.display());
        }),
        _ => run_accuracy(&cfg).map(|rows| {
            for r in rows {
                println!("{:<32} {:.4}", r.imputation_spec.to_string(), r.accuracy_w);
            }
        }),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
