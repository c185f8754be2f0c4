//! Multiple imputation of the missing exposure.
//!
//! With a single incomplete binary variable, chained equations reduce to one
//! conditional model: fit a logistic regression of the exposure on the
//! observed rows, then for each completion draw coefficients from their
//! approximate posterior Normal(b, V) and draw each missing exposure from
//! Bernoulli(expit(x' b*)).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{CompletedDataset, Dataset, Role};
use crate::error::{Error, Result};
use crate::formula::{design_for_rows, predictor_matrix, FormulaError, ModelSpec};
use crate::glm::{draw_coefficients, expit, fit_glm, Family, FittedGlm};
use crate::seed;

/// Default number of imputations.
pub const DEFAULT_M: usize = 20;

#[derive(Debug, Clone)]
pub struct ImputationSet<'a> {
    pub completions: Vec<CompletedDataset<'a>>,
    pub imputation_spec: ModelSpec,
    /// Per-completion seeds, `seed::derive(master, j)`.
    pub seeds: Vec<u64>,
    /// Model fitted on the observed rows; `None` when nothing was missing.
    pub fit: Option<FittedGlm>,
}

impl ImputationSet<'_> {
    pub fn m(&self) -> usize {
        self.completions.len()
    }
}

/// Checks that `spec` is a valid imputation model for `data`.
pub fn check_imputation_spec(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if data.resolve(&spec.response) != Some(Role::Exposure) {
        return Err(Error::InvalidArgument(format!(
            "imputation model `{spec}` must have the exposure as its response"
        )));
    }
    for p in &spec.predictors {
        match data.resolve(p) {
            Some(Role::Covariate(_)) | Some(Role::Outcome) => {}
            Some(_) => {
                return Err(Error::InvalidArgument(format!(
                    "`{p}` cannot be a predictor of the imputation model"
                )))
            }
            None => return Err(FormulaError::Unresolved(p.clone()).into()),
        }
    }
    Ok(())
}

/// Fits the imputation model on the given (observed-exposure) rows.
pub fn fit_imputation_model(data: &Dataset, spec: &ModelSpec, rows: &[usize]) -> Result<FittedGlm> {
    let k = spec.n_coefficients();
    if rows.len() < k + 5 {
        return Err(Error::TooFewRows {
            spec: spec.to_string(),
            rows: rows.len(),
            required: k + 5,
        });
    }
    let (x, y) = design_for_rows(spec, data, rows)?;
    let mut fit = fit_glm(&x, &y, Family::Logistic)?;
    fit.spec = Some(spec.clone());
    Ok(fit)
}

/// Draws one exposure per row of `x` from Bernoulli(expit(x beta)).
///
/// Exactly one uniform is consumed per row, in row order, so two calls with
/// the same RNG state are coupled: raising any linear predictor can only turn
/// a 0 into a 1.
pub fn impute_rows<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &DVector<f64>, rng: &mut R) -> Vec<u8> {
    let eta = x * beta;
    eta.iter()
        .map(|&e| {
            let u: f64 = rng.random();
            u8::from(u < expit(e))
        })
        .collect()
}

/// One posterior-approximate draw: coefficients, then exposures for `x`.
pub fn draw_imputation<R: Rng + ?Sized>(fit: &FittedGlm, x: &DMatrix<f64>, rng: &mut R) -> Result<Vec<u8>> {
    let beta = draw_coefficients(fit, rng)?;
    Ok(impute_rows(x, &beta, rng))
}

/// Produces `m` completed datasets from one fit of `spec` on the observed rows.
pub fn impute<'a>(data: &'a Dataset, spec: &ModelSpec, m: usize, master_seed: u64) -> Result<ImputationSet<'a>> {
    if m < 1 {
        return Err(Error::InvalidArgument("number of imputations must be at least 1".into()));
    }
    check_imputation_spec(data, spec)?;
    let seeds: Vec<u64> = (0..m as u64).map(|j| seed::derive(master_seed, j)).collect();
    let observed: Vec<Option<u8>> = data.exposure().to_vec();

    let missing_rows: Vec<usize> = (0..data.n()).filter(|&i| data.missing_indicator()[i] == 1).collect();
    if missing_rows.is_empty() {
        let base: Vec<u8> = observed.iter().map(|a| a.unwrap_or(0)).collect();
        let completions = (1..=m)
            .map(|j| CompletedDataset::new(data, base.clone(), j))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        return Ok(ImputationSet {
            completions,
            imputation_spec: spec.clone(),
            seeds,
            fit: None,
        });
    }

    let observed_rows: Vec<usize> = (0..data.n()).filter(|&i| data.missing_indicator()[i] == 0).collect();
    let fit = fit_imputation_model(data, spec, &observed_rows)?;
    let x_missing = predictor_matrix(&spec.predictors, data, &missing_rows)?;

    let mut completions = Vec::with_capacity(m);
    for (j, &s) in seeds.iter().enumerate() {
        let mut rng = seed::rng(s);
        let drawn = draw_imputation(&fit, &x_missing, &mut rng)?;
        let mut a: Vec<u8> = observed.iter().map(|v| v.unwrap_or(0)).collect();
        for (&row, &v) in missing_rows.iter().zip(&drawn) {
            a[row] = v;
        }
        completions.push(CompletedDataset::new(data, a, j + 1)?);
    }
    Ok(ImputationSet {
        completions,
        imputation_spec: spec.clone(),
        seeds,
        fit: Some(fit),
    })
}
