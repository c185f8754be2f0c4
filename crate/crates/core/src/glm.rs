//! Maximum-likelihood fitting of Bernoulli-logit and Gaussian-identity models.
//!
//! Logistic fits use iteratively reweighted least squares (Newton steps on the
//! log-likelihood) with step-halving, so the log-likelihood never decreases
//! between iterations. Linear fits are closed-form least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{design_matrix, DesignSource, FormulaError, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Linear,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("{n} rows is too few for {k} coefficients")]
    TooFewRows { n: usize, k: usize },
    #[error("logistic response must be 0/1")]
    NonBinaryResponse,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("quasi-complete separation detected after {} iterations", .0.iterations)]
    SeparationDetected(Box<FittedGlm>),
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("fit did not converge")]
    NotConverged,
    #[error("covariance factorization failed")]
    Factorization,
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when every score component is below this.
    pub gradient_tol: f64,
    /// Or when the relative log-likelihood change falls below this.
    pub rel_loglik_tol: f64,
    pub max_iterations: usize,
    /// |coefficient| x column SD above which a fit is declared separated.
    pub separation_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gradient_tol: 1e-8,
            rel_loglik_tol: 1e-10,
            max_iterations: 100,
            separation_threshold: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm {
    pub spec: Option<ModelSpec>,
    pub family: Family,
    pub coefficients: DVector<f64>,
    /// Inverse observed information (logistic) or sigma^2 (X'X)^-1 (linear).
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub n_rows: usize,
    /// Intercept and slopes, plus one for the linear-family variance.
    pub k_params: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedGlm {
    /// Linear predictor for one row given as the non-intercept values.
    pub fn linear_predictor_row(&self, predictors: &[f64]) -> f64 {
        let b = self.coefficients.as_slice();
        b[0] + b[1..].iter().zip(predictors).map(|(c, x)| c * x).sum::<f64>()
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// ln(1 + e^eta) without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn column(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

fn linear_predictor(x: &DMatrix<f64>, beta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, v) in out.iter_mut().zip(column(x, j)) {
                *o += b * v;
            }
        }
    }
}

/// X' diag(w) X, or X'X when `w` is `None`.
fn weighted_cross(x: &DMatrix<f64>, w: Option<&[f64]>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut h = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = column(x, a);
        for b in a..k {
            let cb = column(x, b);
            let s: f64 = match w {
                Some(w) => ca.iter().zip(cb).zip(w).map(|((p, q), r)| p * q * r).sum(),
                None => ca.iter().zip(cb).map(|(p, q)| p * q).sum(),
            };
            h[(a, b)] = s;
            h[(b, a)] = s;
        }
    }
    h
}

fn cross_vec(x: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.ncols(),
        (0..x.ncols()).map(|j| column(x, j).iter().zip(v).map(|(a, b)| a * b).sum()),
    )
}

/// Cholesky factor, rejecting matrices whose pivots show linear dependence.
fn checked_cholesky(h: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, GlmError> {
    let diag: Vec<f64> = h.diagonal().iter().copied().collect();
    let chol = Cholesky::new(h).ok_or(GlmError::RankDeficient)?;
    let l = chol.l_dirty();
    for (j, d) in diag.iter().enumerate() {
        let p = l[(j, j)];
        if !(p * p > 1e-10 * d.abs()) || !p.is_finite() {
            return Err(GlmError::RankDeficient);
        }
    }
    Ok(chol)
}

fn logistic_loglik(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

fn column_scales(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let c = column(x, j);
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                // constant (intercept) columns are measured on their own scale
                mean.abs().max(1.0)
            }
        })
        .collect()
}

/// Fits `y ~ X` (X includes any intercept column) with default options.
pub fn fit_glm(x: &DMatrix<f64>, y: &DVector<f64>, family: Family) -> Result<FittedGlm, GlmError> {
    fit_glm_with(x, y, family, &FitOptions::default())
}

pub fn fit_glm_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    opts: &FitOptions,
) -> Result<FittedGlm, GlmError> {
    check_shape(x, y)?;
    match family {
        Family::Logistic => fit_logistic(x, y, opts, None),
        Family::Linear => fit_linear(x, y),
    }
}

/// Fits `spec` against a dataset or completed dataset.
pub fn fit_spec<S: DesignSource + ?Sized>(
    spec: &ModelSpec,
    source: &S,
    family: Family,
) -> Result<FittedGlm, GlmError> {
    let (x, y) = design_matrix(spec, source)?;
    let mut fit = fit_glm(&x, &y, family)?;
    fit.spec = Some(spec.clone());
    Ok(fit)
}

/// Score X'(y - expit(X beta)) that IRLS drives to zero.
pub fn logistic_score(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Result<DVector<f64>, GlmError> {
    check_shape(x, y)?;
    if beta.len() != x.ncols() {
        return Err(GlmError::DimensionMismatch {
            expected: x.ncols(),
            found: beta.len(),
        });
    }
    let mut eta = vec![0.0; x.nrows()];
    linear_predictor(x, beta.as_slice(), &mut eta);
    let resid: Vec<f64> = eta.iter().zip(y.iter()).map(|(e, yi)| yi - expit(*e)).collect();
    Ok(cross_vec(x, &resid))
}

/// Log-likelihood after each accepted IRLS iteration (starting point first).
pub fn logistic_trace(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>, GlmError> {
    check_shape(x, y)?;
    let mut trace = Vec::new();
    fit_logistic(x, y, &FitOptions::default(), Some(&mut trace))?;
    Ok(trace)
}

fn check_shape(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), GlmError> {
    if x.nrows() != y.len() {
        return Err(GlmError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() <= x.ncols() {
        return Err(GlmError::TooFewRows {
            n: x.nrows(),
            k: x.ncols(),
        });
    }
    Ok(())
}

fn fit_logistic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &FitOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<FittedGlm, GlmError> {
    let (n, k) = x.shape();
    let ys = y.as_slice();
    if ys.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(GlmError::NonBinaryResponse);
    }
    checked_cholesky(weighted_cross(x, None))?;
    let scales = column_scales(x);

    let mut beta = vec![0.0; k];
    if column(x, 0).iter().all(|&v| v == 1.0) {
        let ybar = (ys.iter().sum::<f64>() / n as f64).clamp(1e-3, 1.0 - 1e-3);
        beta[0] = logit(ybar);
    }
    let mut eta = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut w = vec![0.0; n];
    linear_predictor(x, &beta, &mut eta);
    let mut ll = logistic_loglik(&eta, ys);
    if let Some(t) = trace.as_deref_mut() {
        t.push(ll);
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; k];
    let mut eta_trial = vec![0.0; n];
    while iterations < opts.max_iterations {
        for i in 0..n {
            let mu = expit(eta[i]);
            resid[i] = ys[i] - mu;
            w[i] = mu * (1.0 - mu);
        }
        let score = cross_vec(x, &resid);
        if score.amax() <= opts.gradient_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let chol = checked_cholesky(weighted_cross(x, Some(&w)))?;
        let delta = chol.solve(&score);

        let mut step = 1.0;
        let mut ll_new = f64::NEG_INFINITY;
        for _ in 0..60 {
            for j in 0..k {
                trial[j] = beta[j] + step * delta[j];
            }
            linear_predictor(x, &trial, &mut eta_trial);
            ll_new = logistic_loglik(&eta_trial, ys);
            if ll_new >= ll {
                break;
            }
            step *= 0.5;
        }
        if ll_new < ll {
            // no ascent direction left at machine precision
            converged = score.amax() <= opts.gradient_tol.sqrt();
            break;
        }
        let rel = (ll_new - ll).abs() / (ll.abs() + 1e-12);
        beta.copy_from_slice(&trial);
        std::mem::swap(&mut eta, &mut eta_trial);
        ll = ll_new;
        if let Some(t) = trace.as_deref_mut() {
            t.push(ll);
        }

        let separated = beta
            .iter()
            .zip(&scales)
            .any(|(b, s)| (b * s).abs() > opts.separation_threshold);
        if separated {
            let partial = finish_logistic(x, &beta, &eta, ll, false, iterations)?;
            return Err(GlmError::SeparationDetected(Box::new(partial)));
        }
        if rel < opts.rel_loglik_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GlmError::NonConvergence { iterations });
    }
    finish_logistic(x, &beta, &eta, ll, true, iterations)
}

fn finish_logistic(
    x: &DMatrix<f64>,
    beta: &[f64],
    eta: &[f64],
    ll: f64,
    converged: bool,
    iterations: usize,
) -> Result<FittedGlm, GlmError> {
    let w: Vec<f64> = eta
        .iter()
        .map(|&e| {
            let mu = expit(e);
            mu * (1.0 - mu)
        })
        .collect();
    let covariance = match Cholesky::new(weighted_cross(x, Some(&w))) {
        Some(c) => c.inverse(),
        None if !converged => DMatrix::from_element(x.ncols(), x.ncols(), f64::NAN),
        None => return Err(GlmError::RankDeficient),
    };
    Ok(FittedGlm {
        spec: None,
        family: Family::Logistic,
        coefficients: DVector::from_column_slice(beta),
        covariance,
        log_likelihood: ll,
        n_rows: x.nrows(),
        k_params: x.ncols(),
        converged,
        iterations,
    })
}

fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedGlm, GlmError> {
    let (n, k) = x.shape();
    let chol = checked_cholesky(weighted_cross(x, None))?;
    let beta = chol.solve(&cross_vec(x, y.as_slice()));
    let mut fitted = vec![0.0; n];
    linear_predictor(x, beta.as_slice(), &mut fitted);
    let rss: f64 = fitted.iter().zip(y.iter()).map(|(f, v)| (v - f).powi(2)).sum();
    let sigma2 = rss / (n - k) as f64;
    let nf = n as f64;
    let log_likelihood = -0.5 * nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0);
    Ok(FittedGlm {
        spec: None,
        family: Family::Linear,
        coefficients: beta,
        covariance: chol.inverse() * sigma2,
        log_likelihood,
        n_rows: n,
        k_params: k + 1,
        converged: true,
        iterations: 1,
    })
}

/// Fitted means: expit(X b) for logistic, X b for linear.
pub fn predict_mean(fit: &FittedGlm, x: &DMatrix<f64>) -> Result<DVector<f64>, GlmError> {
    let k = fit.coefficients.len();
    if x.ncols() != k {
        return Err(GlmError::DimensionMismatch {
            expected: k,
            found: x.ncols(),
        });
    }
    let mut eta = vec![0.0; x.nrows()];
    linear_predictor(x, fit.coefficients.as_slice(), &mut eta);
    if fit.family == Family::Logistic {
        eta.iter_mut().for_each(|e| *e = expit(*e));
    }
    Ok(DVector::from_vec(eta))
}

/// `-2 loglik + k ln(n)`.
pub fn bic(fit: &FittedGlm) -> Result<f64, GlmError> {
    if !fit.converged {
        return Err(GlmError::NotConverged);
    }
    Ok(-2.0 * fit.log_likelihood + fit.k_params as f64 * (fit.n_rows as f64).ln())
}

/// One draw from Normal(coefficients, covariance).
///
/// Uses the Cholesky factor when the covariance is positive definite and the
/// symmetric eigen square root otherwise, so a zero covariance returns the
/// coefficients unchanged.
pub fn draw_coefficients<R: Rng + ?Sized>(fit: &FittedGlm, rng: &mut R) -> Result<DVector<f64>, GlmError> {
    let factor = covariance_factor(&fit.covariance)?;
    let z = DVector::from_iterator(
        fit.coefficients.len(),
        (0..fit.coefficients.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    Ok(&fit.coefficients + factor * z)
}

/// A matrix `L` with `L L' = cov`.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, GlmError> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::Factorization);
    }
    if let Some(c) = Cholesky::new(cov.clone()) {
        return Ok(c.unpack());
    }
    let k = cov.nrows();
    let jittered = cov + DMatrix::identity(k, k) * 1e-10;
    let eig = SymmetricEigen::new(jittered);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::Factorization);
    }
    let sqrt_vals = eig.eigenvalues.map(|v| if v > 1e-10 { v.sqrt() } else { 0.0 });
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}
